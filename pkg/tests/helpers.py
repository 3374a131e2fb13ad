"""Scenario builders shared by the tests."""

import numpy as np

from pathdep.functionals import const, coord
from pathdep.paths import PointedPath, constant_path
from pathdep.scenario import AtomicJumpMeasure, Driver, Numerics, ScenarioSpec


def brownian(sigma=1.0, xi=None, driver=None, numerics=None, beta=0.0, horizon=1.0):
    return ScenarioSpec(
        1,
        horizon,
        (const(beta),),
        ((const(sigma),),),
        xi if xi is not None else coord(0),
        driver=driver or Driver(),
        numerics=numerics or Numerics(),
    )


def jump_diffusion(sigma=0.7, lam=2.0, g=0.5, xi=None, horizon=1.0):
    return ScenarioSpec(
        1,
        horizon,
        (const(0.0),),
        ((const(sigma),),),
        xi if xi is not None else coord(0),
        AtomicJumpMeasure(((1.0,),), (lam,)),
        ((const(g),),),
    )


def flat_start(x0=1.0, d=1, horizon=1.0, s=0.0):
    return PointedPath(s, constant_path(np.full(d, x0), horizon))


def two_dim():
    return ScenarioSpec(
        2,
        1.0,
        (const(0.3), const(-0.2)),
        ((const(0.5), const(0.0)), (const(0.1), const(0.4))),
        coord(0),
        AtomicJumpMeasure(((1.0, 1.0), (-1.0, 0.5)), (1.0, 0.5)),
        ((const(0.2), const(-0.1)), (coord(1) * const(0.0) + const(0.3), const(0.1))),
    )
