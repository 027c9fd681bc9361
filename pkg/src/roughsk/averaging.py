"""Averaged observables, the frozen generator, and explicit Poisson solutions.

For observables of the form f(x, y) = x_i g(x) y_k y_l (kind "xyy") or
g(x) y_k y_l (kind "yy"), the average against the frozen invariant law
N(0, J(x)) is c(x) J_{kl}(x) with c the x-dependent prefactor.  The
centered fluctuation f - fbar is solved exactly by

    phi(x, y) = c(x) (y^T A(x) y - Tr[A(x) J(x)]),

where A solves M^T A + A M = (e_k e_l^T + e_l e_k^T)/2.  Two identities
make this work and are exploited throughout: y^T A M y = y_k y_l / 2 for
symmetric A, and Tr(A J) reduces, hence Tr A = J_{kl} when M J + J M^T = id.

The frozen generator acting in y is

    L phi = (D_y phi, -M(x) y) + Tr(D_yy phi) / 2,

which for the explicit phi gives -L phi = f - fbar pointwise; the residual
of that identity on probe clouds is the module's main self-check.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridMismatch, InsufficientData, NonFiniteField, ValidationError
from .linalg import _covariance_batched, covariance_J, solve_lyapunov

__all__ = [
    "PoissonSolution",
    "build_poisson_solution",
    "fbar",
    "generator_apply",
    "poisson_residual",
    "averaging_error",
    "empirical_invariant_covariance",
]


def _prefactor(obs, x):
    """c(x): x_i g(x) for kind 'xyy', g(x) for kind 'yy'.  Vectorized."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(obs.g(x), dtype=float)
    if obs.kind == "xyy":
        return x[..., obs.i - 1] * g
    return g


def observable_value(obs, x, y):
    """f(x, y) = c(x) y_k y_l.  Vectorized over leading axes."""
    y = np.asarray(y, dtype=float)
    return _prefactor(obs, x) * y[..., obs.k - 1] * y[..., obs.l - 1]


def fbar(obs, model, x):
    """Average of the observable against the frozen invariant law at x.

    Returns c(x) * J_{kl}(x); a scalar for a single point, an array for a
    batch of points.
    """
    obs.validate_dim(model.dim)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    J = _covariance_batched(model.friction(x))
    val = _prefactor(obs, x) * J[..., obs.k - 1, obs.l - 1]
    return float(val) if single else val


@dataclass(frozen=True)
class PoissonSolution:
    """Explicit solution of -L phi = f - fbar for one observable and model.

    ``A_field`` maps x to the (symmetrized) solution of the transposed-side
    Lyapunov equation; ``evaluate`` is phi itself.  The y-gradient and the
    trace of the y-Hessian are available in closed form, so generator_apply
    never needs finite differences for these solutions.
    """

    observable: "object"
    A_field: Callable[[np.ndarray], np.ndarray]
    evaluate: Callable[[np.ndarray, np.ndarray], float]
    model: "object"

    def grad_y(self, x, y):
        A = self.A_field(x)
        c = float(_prefactor(self.observable, np.asarray(x, dtype=float)))
        return 2.0 * c * (A @ np.asarray(y, dtype=float))

    def trace_hess_y(self, x):
        A = self.A_field(x)
        c = float(_prefactor(self.observable, np.asarray(x, dtype=float)))
        return 2.0 * c * float(np.trace(A))


def build_poisson_solution(obs, model):
    """Assemble the explicit Poisson solution for (observable, model)."""
    obs.validate_dim(model.dim)
    d = model.dim
    B = np.zeros((d, d))
    B[obs.k - 1, obs.l - 1] += 0.5
    B[obs.l - 1, obs.k - 1] += 0.5

    def A_field(x):
        M = model.friction(np.asarray(x, dtype=float))
        sol = solve_lyapunov(M, B, side="MtA_AM")
        return 0.5 * (sol.matrix + sol.matrix.T)

    def evaluate(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        A = A_field(x)
        J = covariance_J(model.friction(x))
        c = float(_prefactor(obs, x))
        val = c * (float(y @ A @ y) - float(np.trace(A @ J)))
        if not np.isfinite(val):
            raise NonFiniteField("Poisson solution evaluated to a non-finite value")
        return val

    return PoissonSolution(observable=obs, A_field=A_field, evaluate=evaluate, model=model)


def generator_apply(phi, M_at_x, x, y, h=1e-5):
    """Frozen generator at (x, y): (D_y phi, -M y) + Tr(D_yy phi)/2.

    PoissonSolution instances supply their derivatives analytically; any
    other callable phi(x, y) is differentiated in y by central differences
    with step h (only diagonal second derivatives are needed for the
    trace).
    """
    M = np.asarray(M_at_x, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    if M.shape != (d, d):
        raise ValidationError(f"M_at_x must be ({d}, {d}), got {M.shape}")

    if isinstance(phi, PoissonSolution):
        grad = phi.grad_y(x, y)
        tr = phi.trace_hess_y(x)
    else:
        grad = np.empty(d)
        tr = 0.0
        base = float(phi(x, y))
        for j in range(d):
            yp = y.copy()
            ym = y.copy()
            yp[j] += h
            ym[j] -= h
            fp = float(phi(x, yp))
            fm = float(phi(x, ym))
            grad[j] = (fp - fm) / (2.0 * h)
            tr += (fp - 2.0 * base + fm) / h**2
    val = float(grad @ (-(M @ y))) + 0.5 * tr
    if not np.isfinite(val):
        raise NonFiniteField("generator evaluated to a non-finite value")
    return val


def poisson_residual(obs, model, probes):
    """max over probes of |L phi + f - fbar| for the explicit solution phi.

    ``probes`` is an iterable of (x, y) pairs.  Zero up to solver round-off
    and (for generic callables) finite-difference error.
    """
    phi = build_poisson_solution(obs, model)
    worst = 0.0
    for x, y in probes:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        M = model.friction(x)
        lhs = generator_apply(phi, M, x, y)
        res = abs(lhs + float(observable_value(obs, x, y)) - fbar(obs, model, x))
        worst = max(worst, res)
    return worst


def averaging_error(x_path, y_path, obs, model):
    """|int_0^T f(X_s, Y_s) - fbar(X_s) ds| by left-point quadrature."""
    obs.validate_dim(model.dim)
    if not x_path.same_grid(y_path):
        raise GridMismatch("averaging_error needs X and Y on the same grid")
    X = x_path.values[:-1]
    Y = y_path.values[:-1]
    if X.shape[0] == 0:
        return 0.0
    f_vals = observable_value(obs, X, Y)
    fbar_vals = fbar(obs, model, X)
    return float(abs(np.sum(f_vals - fbar_vals) * x_path.dt))


def empirical_invariant_covariance(frozen_path, burn_in_fraction=0.2):
    """Sample covariance of the post-burn-in states of a frozen-process path."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValidationError(
            f"burn_in_fraction must lie in [0, 1), got {burn_in_fraction}"
        )
    vals = frozen_path.values
    start = int(np.floor(vals.shape[0] * burn_in_fraction))
    kept = vals[start:]
    if kept.shape[0] < 1000:
        raise InsufficientData(
            f"need >= 1000 post-burn-in points, have {kept.shape[0]}"
        )
    centered = kept - kept.mean(axis=0)
    return (centered.T @ centered) / (kept.shape[0] - 1)
