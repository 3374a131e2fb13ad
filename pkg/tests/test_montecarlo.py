import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brownian, flat_start, jump_diffusion
from pathdep.functionals import const, coord, poly, running_integral, time_weighted
from pathdep.montecarlo import (
    BiasedField,
    ConstantField,
    Estimate,
    FunctionalField,
    GammaXField,
    estimate_Ps,
    estimate_time_integral,
    mild_residuals,
    nested_estimate,
    nested_split,
    trapezoid_weights,
    z_score,
)
from pathdep.scenario import Driver
from pathdep.simulator import TimeGrid

GRID = TimeGrid(0.0, 1.0, 50)


def test_estimate_and_z_score():
    e = Estimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert e.mean == 2.5 and e.n == 4
    assert e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert e.within(2.5) and not e.within(100.0)
    with pytest.raises(ValueError):
        Estimate.from_samples([1.0])
    assert z_score(0.0, 0.0) == 0.0
    assert z_score(1e-3, 0.0) == math.inf
    assert z_score(-1.0, 0.5) == -2.0


@given(st.lists(st.floats(0, 10), min_size=2, max_size=20, unique=True))
def test_trapezoid_weights_integrate_linear_exactly(ts):
    v = np.sort(np.array(ts))
    w = trapezoid_weights(v)
    assert w.sum() == pytest.approx(v[-1] - v[0])
    assert w @ (2 * v + 1) == pytest.approx((v[-1] ** 2 + v[-1]) - (v[0] ** 2 + v[0]), abs=1e-9)


def test_second_moment_oracle():
    # E[X_T^2] = x0^2 + sigma^2 T
    est = estimate_Ps(brownian(sigma=0.8), poly(0, 0, 0, 1), flat_start(1.5), GRID, 20000, 4)
    assert est.within(1.5**2 + 0.64)


def test_time_integral_oracle():
    # int_0^T E[X_r] dr = x0 T + b T^2 / 2
    est = estimate_time_integral(brownian(beta=0.4), coord(0), flat_start(1.0), GRID, 5000, 2)
    assert est.within(1.0 + 0.2)


def test_nested_split_and_tower_property():
    assert nested_split(10**6) == (10**4, 10**2)
    spec = jump_diffusion()
    est = nested_estimate(spec, poly(0, 0, 0, 1), flat_start(1.0), TimeGrid(0.0, 1.0, 20), 0.5, 8000, 3)
    assert est.within(1.0 + 0.49 + 2 * 0.25)
    direct = nested_estimate(spec, coord(0), flat_start(1.0), TimeGrid(0.0, 1.0, 20), 1.0, 8000, 3)
    assert direct.n == nested_split(8000)[0]


def test_exact_candidates_pass_mild_equations():
    spec = brownian(sigma=1.0)
    rep = mild_residuals(spec, coord(0), (const(1.0),), flat_start(1.0), GRID, 20000, 5)
    assert rep.passed()
    assert len(rep.residuals) == 2
    data = rep.to_dict()
    assert data["metadata"]["n_paths"] == 20000


def test_biased_candidate_fails():
    spec = brownian(sigma=1.0)
    Y = BiasedField(FunctionalField(coord(0)), 0.5)
    rep = mild_residuals(spec, Y, FunctionalField((const(1.0),)), flat_start(1.0), GRID, 20000, 5)
    assert abs(rep.residuals[0].z_score) > 4


def test_constant_candidate_has_zero_residual():
    spec = brownian(xi=const(2.0))
    rep = mild_residuals(spec, const(2.0), ConstantField(0.0, (1,)), flat_start(1.0), GRID, 100, 5)
    assert rep.residuals[0].residual == 0.0
    assert rep.max_abs_z() == 0.0 or rep.max_abs_z() < 4


def test_linear_driver_oracle():
    # f = -y, xi = X_T: Y_t = e^{-(T-t)} w(t), Z = e^{-(T-t)}; exp(t - 1) is replaced by its
    # degree-7 Taylor polynomial (error below 1e-5 on [0, 1])
    c = [math.exp(-1) / math.factorial(k) for k in range(8)]
    spec = brownian(driver=Driver("affine_y", (-1.0,)))
    Y = time_weighted(c, coord(0))
    Z = (time_weighted(c),)
    rep = mild_residuals(spec, Y, Z, flat_start(1.0), GRID, 20000, 8)
    assert rep.passed()


def test_path_dependent_classical_pair():
    spec = jump_diffusion(xi=running_integral(0))
    phi = running_integral(0) + time_weighted((1.0, -1.0), coord(0))
    rep = mild_residuals(spec, phi, GammaXField(phi, spec), flat_start(1.0), TimeGrid(0.0, 1.0, 200), 20000, 6)
    assert rep.passed()
