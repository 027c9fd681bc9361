"""Lyapunov solvers and the derived drift/area-correction fields.

The continuous-time Lyapunov equations used throughout are

    MJ + JM^T = B      (side "MJ_JMt"; B = id gives the velocity covariance)
    M^T A + AM = B     (side "MtA_AM"; used by the Poisson solutions)

solved by vectorization: with row-major vec(X) = X.ravel(),

    vec(MX)    = (M kron I) vec(X)
    vec(X M^T) = (I kron M) vec(X)

so each equation becomes a d^2 x d^2 linear solve.  The residual of the
returned matrix is always computed and checked; a residual far above
round-off means the vectorized system was numerically singular (the
friction spectrum nearly cancels), which is reported as SingularSystem
rather than returned as garbage.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem, ValidationError
from .models import friction_grad_of

__all__ = [
    "LyapunovSolution",
    "solve_lyapunov",
    "covariance_J",
    "noise_induced_drift",
    "area_correction_integrand",
]

_SIDES = ("MJ_JMt", "MtA_AM")
# residual above this (relative to |B|) marks the solve as unusable
_RESIDUAL_RTOL = 1e-6


@dataclass(frozen=True)
class LyapunovSolution:
    matrix: np.ndarray
    residual_norm: float


def _check_square(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def _residual(M, X, B, side):
    if side == "MJ_JMt":
        R = M @ X + X @ M.T - B
    else:
        R = M.T @ X + X @ M - B
    return float(np.linalg.norm(R))


def solve_lyapunov(M, B, side="MJ_JMt"):
    """Solve a continuous-time Lyapunov equation for the given side.

    Returns a LyapunovSolution carrying the solution matrix and the
    Frobenius norm of its residual.  Raises SingularSystem when the
    vectorized system cannot be solved to working accuracy.
    """
    if side not in _SIDES:
        raise ValidationError(f"side must be one of {_SIDES}, got {side!r}")
    M = _check_square(M, "M")
    B = _check_square(B, "B")
    if M.shape != B.shape:
        raise ValidationError(f"M and B shapes differ: {M.shape} vs {B.shape}")
    d = M.shape[0]
    A = M if side == "MJ_JMt" else M.T
    eye = np.eye(d)
    K = np.kron(A, eye) + np.kron(eye, A)
    try:
        x = np.linalg.solve(K, B.ravel())
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"Lyapunov system is singular: {exc}") from exc
    X = x.reshape(d, d)
    res = _residual(M, X, B, side)
    if not np.isfinite(res) or res > _RESIDUAL_RTOL * (1.0 + np.linalg.norm(B)):
        raise SingularSystem(
            f"Lyapunov solve left residual {res:.3e}; system is numerically singular"
        )
    return LyapunovSolution(matrix=X, residual_norm=res)


def covariance_J(M):
    """Stationary velocity covariance J(M): MJ + JM^T = id, symmetrized.

    The exact solution is symmetric; the numerical one is symmetrized so
    downstream code can rely on exact symmetry.
    """
    M = _check_square(M, "M")
    sol = solve_lyapunov(M, np.eye(M.shape[0]), side="MJ_JMt")
    return 0.5 * (sol.matrix + sol.matrix.T)


def _covariance_batched(M):
    """J(M) for a stack of friction matrices, shape (..., d, d)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    if d == 1:
        return 0.5 / M
    eye = np.eye(d)
    K = np.einsum("...ik,jl->...ijkl", M, eye) + np.einsum("ik,...jl->...ijkl", eye, M)
    K = K.reshape(M.shape[:-2] + (d * d, d * d))
    rhs = np.broadcast_to(eye.ravel(), M.shape[:-2] + (d * d,))
    try:
        J = np.linalg.solve(K, rhs[..., None])[..., 0].reshape(M.shape)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"batched Lyapunov solve failed: {exc}") from exc
    return 0.5 * (J + np.swapaxes(J, -1, -2))


def _grad_inverse_friction(model, x):
    """d(M^{-1}) along each coordinate: -M^{-1} (dM) M^{-1}, (..., d, d, d)."""
    M = model.friction(x)
    Minv = np.linalg.inv(M)
    G = friction_grad_of(model)(x)
    return -np.einsum("...ak,...jkl,...lb->...jab", Minv, G, Minv), Minv, M


def noise_induced_drift(model, x):
    """Drift generated by state dependence of the friction.

    S_j(x) = sum_{k,l} (d_{x_l} M^{-1}(x))_{jk} J_{kl}(x), the correction
    the limit equation carries on top of M^{-1} force.  Vectorized over
    leading axes of x.
    """
    x = np.asarray(x, dtype=float)
    Ginv, _, M = _grad_inverse_friction(model, x)
    J = _covariance_batched(M)
    return np.einsum("...ljk,...kl->...j", Ginv, J)


def area_correction_integrand(model, x):
    """Integrand of the second-level correction: (J M^{-T} - M^{-1} J) / 2.

    Antisymmetric at every x; its time integral along the limit path is the
    gap between the limit lift and the plain Stratonovich lift.
    """
    x = np.asarray(x, dtype=float)
    M = model.friction(x)
    Minv = np.linalg.inv(M)
    J = _covariance_batched(M)
    MinvT = np.swapaxes(Minv, -1, -2)
    return 0.5 * (J @ MinvT - Minv @ J)


def _noise_drift_batched(model, x, Minv=None):
    """noise_induced_drift with an optional precomputed inverse."""
    x = np.asarray(x, dtype=float)
    M = model.friction(x)
    if Minv is None:
        Minv = np.linalg.inv(M)
    G = friction_grad_of(model)(x)
    Ginv = -np.einsum("...ak,...jkl,...lb->...jab", Minv, G, Minv)
    J = _covariance_batched(M)
    return np.einsum("...ljk,...kl->...j", Ginv, J)
