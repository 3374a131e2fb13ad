"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st

from pathdep.functionals import FunctionalSpec, const, coord, poly, running_integral, running_max, time_weighted
from pathdep.paths import CadlagPath

small = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def leaves(d=1, smooth=True):
    idx = st.integers(0, d - 1)
    options = [
        small.map(const),
        idx.map(coord),
        st.builds(lambda i, cs: poly(i, *cs), idx, st.lists(small, min_size=1, max_size=3)),
        idx.map(running_integral),
        st.lists(small, min_size=1, max_size=2).map(time_weighted),
    ]
    if not smooth:
        options.append(st.builds(lambda i, a: running_max(i, a), idx, st.booleans()))
    return st.one_of(options)


def functionals(d=1, smooth=True, max_leaves=4):
    def extend(children):
        return st.one_of(
            st.builds(lambda a, b: a + b, children, children),
            st.builds(lambda a, b: a * b, children, children),
            st.builds(lambda c, a: FunctionalSpec("scale", (c,), (a,)), small, children),
            st.builds(lambda cs, a: time_weighted(cs, a), st.lists(small, min_size=1, max_size=2), children),
        )

    return st.recursive(leaves(d, smooth), extend, max_leaves=max_leaves)


@st.composite
def grid_paths(draw, d=1, horizon=1.0, max_points=8):
    m = draw(st.integers(1, max_points))
    inner = draw(st.lists(st.floats(0.01, horizon * 0.99), min_size=m - 1, max_size=m - 1, unique=True))
    times = np.array([0.0] + sorted(inner))
    vals = draw(st.lists(small, min_size=m * d, max_size=m * d))
    return CadlagPath(times, np.array(vals).reshape(m, d), horizon)
