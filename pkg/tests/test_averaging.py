"""Tests for frozen-average observables and the explicit Poisson solutions."""

import math

import numpy as np
import pytest

from roughsk.averaging import (
    averaging_error,
    build_poisson_solution,
    empirical_invariant_covariance,
    fbar,
    generator_apply,
    poisson_residual,
)
from roughsk.averaging import observable_value
from roughsk.errors import GridMismatch, InsufficientData, ValidationError
from roughsk.models import ScalarObservableSpec, builtin_model
from roughsk.sde import SamplePath, sample_noise, simulate_frozen


def _yy(k=1, l=1, g=None):
    if g is None:
        return ScalarObservableSpec(kind="yy", k=k, l=l)
    return ScalarObservableSpec(kind="yy", k=k, l=l, g=g)


# ---------------------------------------------------------------------------
# frozen averages
# ---------------------------------------------------------------------------


def test_fbar_scalar_sin_closed_form():
    # for f = y^2 the frozen average is J(x) = 1 / (2 m(x));
    # m(pi/2) = 3 gives 1/6
    model = builtin_model("scalar_sin")
    obs = _yy()
    np.testing.assert_allclose(fbar(obs, model, np.array([math.pi / 2])), 1.0 / 6.0, rtol=1e-14)
    np.testing.assert_allclose(fbar(obs, model, np.array([0.0])), 0.25, rtol=1e-14)


def test_fbar_xyy_multiplies_by_coordinate():
    model = builtin_model("scalar_sin")
    obs = ScalarObservableSpec(kind="xyy", i=1, k=1, l=1)
    x = np.array([math.pi / 2])
    np.testing.assert_allclose(fbar(obs, model, x), (math.pi / 2) / 6.0, rtol=1e-14)


def test_fbar_off_diagonal_vanishes_for_diagonal_friction():
    model = builtin_model("diag_tanh")
    obs = _yy(k=1, l=2)
    x = np.array([0.3, -1.2])
    assert fbar(obs, model, x) == 0.0
    # and the diagonal entry picks up the right component of the friction
    obs2 = _yy(k=2, l=2)
    np.testing.assert_allclose(
        fbar(obs2, model, x), 1.0 / (2.0 * (2.0 + math.tanh(-1.2))), rtol=1e-14
    )


def test_fbar_batched_matches_pointwise():
    model = builtin_model("scalar_sin")
    obs = _yy()
    xs = np.linspace(-2.0, 2.0, 7)[:, None]
    batch = fbar(obs, model, xs)
    single = np.array([fbar(obs, model, x) for x in xs])
    np.testing.assert_allclose(batch, single, rtol=1e-15)


def test_observable_value_vectorized():
    obs = ScalarObservableSpec(kind="xyy", i=1, k=1, l=2)
    x = np.array([[2.0, 0.0], [1.0, 3.0]])
    y = np.array([[1.0, 4.0], [2.0, 5.0]])
    np.testing.assert_allclose(observable_value(obs, x, y), [8.0, 10.0])


# ---------------------------------------------------------------------------
# generator and Poisson equation
# ---------------------------------------------------------------------------


def test_generator_on_quadratic_callable():
    # L|y|^2 = 2 y . (-M y) + tr(I) for the frozen generator
    M = np.array([[1.0, 1.0], [-1.0, 1.0]])
    y = np.array([0.7, -0.4])
    x = np.zeros(2)
    val = generator_apply(lambda x_, y_: float(y_ @ y_), M, x, y)
    expect = -2.0 * float(y @ M @ y) + 2.0
    assert abs(val - expect) < 1e-4


def test_generator_validates_friction_shape():
    with pytest.raises(ValidationError):
        generator_apply(lambda x_, y_: 0.0, np.eye(3), np.zeros(2), np.zeros(2))


def test_poisson_solution_scalar_closed_form():
    # d = 1: phi(x, y) = (y^2 - J) / (2 m) with J = 1 / (2 m)
    model = builtin_model("scalar_sin")
    sol = build_poisson_solution(_yy(), model)
    y = 1.3
    expect = (y**2 - 0.25) / 4.0
    np.testing.assert_allclose(sol.evaluate(np.array([0.0]), np.array([y])), expect, rtol=1e-13)
    np.testing.assert_allclose(sol.A_field(np.array([0.0])), [[0.25]], rtol=1e-13)


def test_poisson_solution_derivatives_match_finite_differences():
    model = builtin_model("const_rot2")
    sol = build_poisson_solution(_yy(k=1, l=2), model)
    x = np.zeros(2)
    y = np.array([0.8, -0.3])
    h = 1e-6
    grad_fd = np.empty(2)
    tr_fd = 0.0
    base = sol.evaluate(x, y)
    for j in range(2):
        yp, ym = y.copy(), y.copy()
        yp[j] += h
        ym[j] -= h
        fp, fm = sol.evaluate(x, yp), sol.evaluate(x, ym)
        grad_fd[j] = (fp - fm) / (2 * h)
        tr_fd += (fp - 2 * base + fm) / h**2
    np.testing.assert_allclose(sol.grad_y(x, y), grad_fd, atol=1e-6)
    np.testing.assert_allclose(sol.trace_hess_y(x), tr_fd, atol=1e-3)


def test_generator_agrees_between_analytic_and_fd_paths():
    model = builtin_model("scalar_sin")
    sol = build_poisson_solution(_yy(), model)
    x = np.array([0.4])
    y = np.array([-1.1])
    M = model.friction(x)
    analytic = generator_apply(sol, M, x, y)
    fd = generator_apply(lambda x_, y_: sol.evaluate(x_, y_), M, x, y)
    assert abs(analytic - fd) < 1e-4


@pytest.mark.parametrize("model_name", ["scalar_sin", "const_rot2", "diag_tanh"])
def test_poisson_residual_is_solver_roundoff(model_name):
    # the explicit solution satisfies -L phi = f - fbar identically, so the
    # residual with analytic derivatives sits at numerical noise
    model = builtin_model(model_name)
    obs = _yy(k=1, l=min(2, model.dim))
    gen = np.random.Generator(np.random.Philox(key=77))
    probes = [
        (gen.normal(0.0, 2.0, model.dim), gen.normal(0.0, 2.0, model.dim))
        for _ in range(25)
    ]
    assert poisson_residual(obs, model, probes) < 1e-12


def test_poisson_residual_xyy_kind():
    model = builtin_model("diag_tanh")
    obs = ScalarObservableSpec(kind="xyy", i=2, k=1, l=1)
    gen = np.random.Generator(np.random.Philox(key=78))
    probes = [
        (gen.normal(0.0, 2.0, 2), gen.normal(0.0, 2.0, 2)) for _ in range(25)
    ]
    assert poisson_residual(obs, model, probes) < 1e-12


# ---------------------------------------------------------------------------
# pathwise averaging error
# ---------------------------------------------------------------------------


def test_averaging_error_zero_velocity_is_fbar_quadrature():
    # with Y identically zero the integrand reduces to -fbar(X_s), so the
    # error equals the left-point quadrature of fbar along X
    model = builtin_model("scalar_sin")
    obs = _yy()
    n, dt = 20, 0.05
    x = SamplePath(0.0, dt, np.zeros((n + 1, 1)))
    y = SamplePath(0.0, dt, np.zeros((n + 1, 1)))
    # fbar(0) = 1/4 at every node; 20 left points
    np.testing.assert_allclose(averaging_error(x, y, obs, model), 0.25 * n * dt, rtol=1e-14)


def test_averaging_error_nonuniform_hand_quadrature():
    model = builtin_model("scalar_sin")
    obs = _yy()
    xv = np.array([[0.0], [1.0], [-1.0]])
    yv = np.array([[2.0], [0.5], [1.0]])
    dt = 0.1
    x = SamplePath(0.0, dt, xv)
    y = SamplePath(0.0, dt, yv)
    total = 0.0
    for i in range(2):
        m = 2.0 + math.sin(xv[i, 0])
        total += (yv[i, 0] ** 2 - 1.0 / (2.0 * m)) * dt
    np.testing.assert_allclose(averaging_error(x, y, obs, model), abs(total), rtol=1e-14)


def test_averaging_error_demands_shared_grid():
    model = builtin_model("scalar_sin")
    x = SamplePath(0.0, 0.1, np.zeros((4, 1)))
    y = SamplePath(0.0, 0.2, np.zeros((4, 1)))
    with pytest.raises(GridMismatch):
        averaging_error(x, y, _yy(), model)


# ---------------------------------------------------------------------------
# empirical invariant covariance
# ---------------------------------------------------------------------------


def test_empirical_covariance_matches_lyapunov_solution():
    # the rotating friction still has invariant covariance I/2 because
    # M + M^T = 2 I; long exact-sampler runs must reproduce it
    M = np.array([[1.0, 1.0], [-1.0, 1.0]])
    noise = sample_noise(120_000, 2, 0.2, seed=71)
    path = simulate_frozen(M, noise)
    cov = empirical_invariant_covariance(path)
    np.testing.assert_allclose(cov, 0.5 * np.eye(2), atol=0.025)


def test_empirical_covariance_needs_enough_samples():
    noise = sample_noise(900, 1, 0.1, seed=0)
    path = simulate_frozen(np.array([[1.0]]), noise)
    with pytest.raises(InsufficientData):
        empirical_invariant_covariance(path)


def test_empirical_covariance_burn_in_validation():
    noise = sample_noise(2_000, 1, 0.1, seed=0)
    path = simulate_frozen(np.array([[1.0]]), noise)
    with pytest.raises(ValidationError):
        empirical_invariant_covariance(path, burn_in_fraction=1.0)
    with pytest.raises(ValidationError):
        empirical_invariant_covariance(path, burn_in_fraction=-0.1)
