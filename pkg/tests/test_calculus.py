import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brownian, flat_start, jump_diffusion, two_dim
from pathdep.calculus import (
    CalculusError,
    DerivativeParams,
    apply_A,
    derivative_nodes,
    derivative_sweep_csv,
    gamma_product_rule,
    gamma_with_X,
    horizontal_derivative,
    ito_residual,
    vertical_derivative,
    vertical_hessian,
)
from pathdep.functionals import coord, poly, running_integral, running_max, time_weighted
from pathdep.paths import CadlagPath
from pathdep.simulator import TimeGrid, simulate
from strategies import functionals, grid_paths

FD = DerivativeParams(method="fd")
PATH = CadlagPath([0.0, 0.2, 0.45], [[0.5], [1.5], [-0.3]], 1.0)
PD = running_integral(0) + time_weighted((1.0, -1.0), coord(0))  # int_0^t w dr + w(t)(T - t)


@pytest.mark.parametrize("params", [None, FD])
@pytest.mark.parametrize("t", [0.1, 0.45, 0.7])
def test_path_dependent_oracle_is_harmonic(params, t):
    spec = jump_diffusion(sigma=0.7, lam=2.0, g=0.5)
    op = apply_A(PD, spec, t, PATH, params)
    assert abs(op.total) < 1e-6
    # Gamma(X, Phi) = (T - t)(sigma^2 + lambda g^2)
    assert gamma_with_X(PD, spec, t, PATH, params)[0] == pytest.approx((1 - t) * (0.49 + 0.5), rel=1e-6)


@pytest.mark.parametrize("params", [None, FD])
def test_square_generator(params):
    spec = jump_diffusion(sigma=0.7, lam=2.0, g=0.5)
    x = PATH(0.7)[0]
    phi = poly(0, 0.0, 0.0, 1.0)
    assert apply_A(phi, spec, 0.7, PATH, params).total == pytest.approx(0.49 + 2.0 * 0.25, rel=1e-6)
    expected = 2 * x * 0.49 + 2.0 * 0.5 * ((x + 0.5) ** 2 - x**2)
    assert gamma_with_X(phi, spec, 0.7, PATH, params)[0] == pytest.approx(expected, rel=1e-6)


def test_running_integral_derivatives():
    phi = running_integral(0)
    assert horizontal_derivative(phi, 0.7, PATH) == pytest.approx(-0.3)
    assert horizontal_derivative(phi, 0.7, PATH, FD) == pytest.approx(-0.3, rel=1e-6)
    assert vertical_derivative(phi, 0.7, PATH)[0] == 0.0
    assert abs(vertical_derivative(phi, 0.7, PATH, FD)[0]) < 1e-8


def test_running_max_uses_finite_differences():
    phi = running_max(0)
    with pytest.raises(CalculusError):
        vertical_derivative(phi, 0.7, PATH, DerivativeParams(method="exact"))
    # current value -0.3 is below the running max 1.5, so the bump does not move it
    assert vertical_derivative(phi, 0.7, PATH)[0] == 0.0
    at_max = CadlagPath([0.0, 0.2], [[0.5], [1.5]], 1.0)
    assert vertical_derivative(phi, 0.7, at_max, DerivativeParams(scheme="forward"))[0] == pytest.approx(1.0)


def test_hessian_is_symmetric_2d():
    p = CadlagPath([0.0, 0.3], [[0.5, -1.0], [1.0, 2.0]], 1.0)
    phi = coord(0) * coord(1) * running_integral(1)
    h = vertical_hessian(phi, 0.6, p, FD)
    np.testing.assert_allclose(h, h.T)
    np.testing.assert_allclose(h, vertical_hessian(phi, 0.6, p), atol=1e-4)


@given(functionals(d=2), grid_paths(d=2), st.floats(0.0, 1.0))
def test_closed_forms_agree_with_finite_differences(phi, path, t):
    ex = derivative_nodes(phi, path.times, path.values)
    fd = derivative_nodes(phi, path.times, path.values, FD)
    scale = 1.0 + np.abs(ex.value)[..., None]
    assert np.all(np.abs(ex.grad - fd.grad) <= 1e-5 * (scale + np.abs(ex.grad)))
    assert np.all(np.abs(ex.hess - fd.hess) <= 1e-3 * (scale[..., None] + np.abs(ex.hess)))
    assert np.all(np.abs(ex.horizontal - fd.horizontal) <= 1e-4 * (1.0 + np.abs(ex.horizontal) + np.abs(ex.value)))


@given(functionals(d=2), grid_paths(d=2), st.floats(0.0, 1.0))
def test_product_rule_gamma_matches_gamma_with_X(phi, path, t):
    spec = two_dim()
    direct = gamma_with_X(phi, spec, t, path)
    for i in range(2):
        via = gamma_product_rule(phi, coord(i), spec, t, path)
        assert abs(via - direct[i]) <= 1e-6 * (1.0 + abs(direct[i]))


def test_ito_residual_shrinks_under_refinement():
    spec = jump_diffusion()
    phi = poly(0, 0.0, 0.0, 1.0)
    rms = []
    for n in (250, 1000, 4000):
        ens = simulate(spec, flat_start(), TimeGrid(0.0, 1.0, n), 400, 17)
        rms.append(float(np.sqrt(np.mean(ito_residual(phi, spec, ens) ** 2))))
    assert rms[0] > rms[1] > rms[2]


def test_ito_residual_exact_for_affine():
    spec = brownian()
    ens = simulate(spec, flat_start(), TimeGrid(0.0, 1.0, 20), 50, 1)
    assert np.max(np.abs(ito_residual(coord(0), spec, ens))) < 1e-12


def test_derivative_sweep_csv():
    text = derivative_sweep_csv(PD, jump_diffusion(), PATH)
    lines = text.strip().splitlines()
    assert lines[0] == "t,value,horizontal,drift,diffusion,jump,total"
    assert len(lines) == 1 + PATH.times.size
    assert all(abs(float(ln.split(",")[-1])) < 1e-9 for ln in lines[1:])


def test_params_validation():
    with pytest.raises(ValueError):
        DerivativeParams(eps_vertical=0.0)
    with pytest.raises(ValueError):
        DerivativeParams(scheme="backward")
