"""Time stepping for the fast-slow pair, its limit equation, and frozen OU runs.

The systems integrated here, driven by one shared noise bundle W:

    fast-slow pair   dX = (1/eps) Y dt
                     dY = -(1/eps^2) M(X) Y dt + (1/eps) F(X) dt + (1/eps) dW
    limit equation   dX = [S(X) + M^{-1}(X) F(X)] dt + M^{-1}(X) dW
    frozen process   dY = -M Y dt + dW          (M constant)

with S the noise-induced drift from linalg.  Both start at zero.  The two
schemes for the pair:

* EulerMaruyama: explicit stepping, reference scheme, needs dt well below
  eps^2 / |M| (guarded).
* ExponentialEuler: coefficients are frozen at X_n over each step and the
  velocity block is advanced by its exact transition law,

      Y_{n+1} = E Y_n + eps M^{-1}(id - E) F + Sigma^{1/2} dW_n / sqrt(dt),

  where E = exp(-M dt/eps^2) and Sigma = J - E J E^T is the exact one-step
  noise covariance (a consequence of M J + J M^T = id: the integral
  int_0^tau exp(-Mu) exp(-M^T u) du telescopes to J - E J E^T).  The
  position block uses the frozen-coefficient integral identity

      X_{n+1} = X_n + eps M^{-1}(Y_n - Y_{n+1}) + M^{-1} F dt + M^{-1} dW_n,

  which is exact for the frozen pair and keeps the coupling between the dW
  entering X and the dW entering Y.

Noise streams: sample_noise keys a counter-based Philox generator directly
with the (masked 128-bit) seed, draws uniforms in row-major order, one
64-bit word per entry, and maps them through the inverse normal CDF at the
dyadic midpoint (u + 2^-54).  Row i of the bundle therefore depends only on
(seed, i, d), and distinct stream keys from stream_key() give independent
streams for Monte Carlo batches.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .backend import kernels_for
from .errors import BlowUp, GridMismatch, StabilityViolation, ValidationError
from .linalg import _covariance_batched, _noise_drift_batched, covariance_J
from .models import _batched_diag

__all__ = [
    "NoiseBundle",
    "SamplePath",
    "stream_key",
    "sample_noise",
    "simulate_fast_slow",
    "simulate_limit",
    "simulate_frozen",
    "change_of_variables",
    "write_path_csv",
    "SCHEMES",
]

SCHEMES = ("EulerMaruyama", "ExponentialEuler")

_KEY_MASK = (1 << 128) - 1


@dataclass(frozen=True)
class NoiseBundle:
    """Brownian increments on a uniform grid: row i is W_{t_{i+1}} - W_{t_i}."""

    dt: float
    increments: np.ndarray
    seed: int
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        inc = np.ascontiguousarray(np.asarray(self.increments, dtype=float))
        if inc.ndim != 2 or inc.shape[0] < 1:
            raise ValidationError(f"increments must be (n, d) with n >= 1, got {inc.shape}")
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "n", inc.shape[0])
        object.__setattr__(self, "d", inc.shape[1])


@dataclass(frozen=True)
class SamplePath:
    """Values of one process on the uniform grid t0 + i*dt, i = 0..n."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise ValidationError(f"values must be (n+1, d), got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("path values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.shape[0])

    def same_grid(self, other):
        return (
            self.n_steps == other.n_steps
            and abs(self.t0 - other.t0) <= 1e-12 * (1.0 + abs(self.t0))
            and abs(self.dt - other.dt) <= 1e-12 * self.dt
        )

    def coarsen(self, factor):
        """View of the path on every factor-th grid point."""
        factor = int(factor)
        if factor < 1:
            raise ValidationError(f"coarsen factor must be >= 1, got {factor}")
        if self.n_steps % factor != 0:
            raise GridMismatch(
                f"cannot coarsen {self.n_steps} steps by factor {factor}"
            )
        return SamplePath(self.t0, self.dt * factor, self.values[::factor])


def stream_key(*parts):
    """Derive a 128-bit stream id from integer parts (seed, epsilon index, path...).

    SHA-256 of the little-endian packed parts, truncated to 128 bits; used to
    key independent Philox streams so Monte Carlo batches are reproducible
    regardless of execution order or platform.
    """
    packed = b"".join(int(p).to_bytes(16, "little", signed=True) for p in parts)
    return int.from_bytes(hashlib.sha256(packed).digest()[:16], "little")


def sample_noise(n, d, dt, seed):
    """Draw an (n, d) bundle of Brownian increments with variance dt per entry.

    Deterministic in (seed, n, d): see the module docstring for the exact
    generation scheme.
    """
    n = int(n)
    d = int(d)
    if n < 1 or d < 1:
        raise ValidationError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    gen = np.random.Generator(np.random.Philox(key=int(seed) & _KEY_MASK))
    u = gen.random((n, d))
    z = ndtri(u + 2.0**-54)
    return NoiseBundle(dt=float(dt), increments=z * np.sqrt(dt), seed=int(seed))


def _lambda_max_estimate(model):
    """Crude bound for |M(x)| used by the explicit-scheme stability guard."""
    probes = [np.zeros(model.dim)]
    for r in (1.0, 2.5, 5.0):
        for j in range(model.dim):
            e = np.zeros(model.dim)
            e[j] = r
            probes.append(e)
            probes.append(-e)
    M = model.friction(np.stack(probes))
    return float(np.linalg.svd(M, compute_uv=False)[..., 0].max())


def _normalize_scheme(scheme):
    key = str(scheme).replace("_", "").replace("-", "").lower()
    for name in SCHEMES:
        if key == name.lower():
            return name
    raise ValidationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def _contig(a):
    return np.ascontiguousarray(a, dtype=float)


def _psd_sqrt_batched(S):
    """Symmetric square root of a stack of PSD matrices via eigh."""
    w, V = np.linalg.eigh(0.5 * (S + np.swapaxes(S, -1, -2)))
    w = np.clip(w, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", V, np.sqrt(w), V)


def _tile(mat, N):
    return _contig(np.broadcast_to(mat, (N,) + mat.shape))


class _FrozenStepFactory:
    """Per-step frozen-coefficient quantities (E, M^{-1}, Sigma^{1/2}).

    Picks the cheapest evaluation path the model's structure allows:
    constant friction is precomputed once, scalar and diagonal friction
    use elementwise formulas, anything else falls back to per-matrix
    expm plus batched Lyapunov/eigh solves.
    """

    def __init__(self, model, tau, n_batch):
        self.model = model
        self.tau = tau
        self.cached = None
        if model.constant_friction:
            M = model.friction(np.zeros((1, model.dim)))[0]
            E = scipy.linalg.expm(-M * tau)
            J = covariance_J(M)
            sig = _psd_sqrt_batched(J - E @ J @ E.T)
            Minv = np.linalg.inv(M)
            self.cached = (_tile(E, n_batch), _tile(Minv, n_batch), _tile(sig, n_batch))

    def __call__(self, X):
        if self.cached is not None:
            return self.cached
        model, tau = self.model, self.tau
        d = model.dim
        M = model.friction(X)
        if d == 1:
            m = M[:, 0, 0]
            E = np.exp(-m * tau)
            var = (1.0 - E * E) * (0.5 / m)
            return (
                _contig(E[:, None, None]),
                _contig(1.0 / M),
                _contig(np.sqrt(var)[:, None, None]),
            )
        if model.diagonal_friction:
            m = np.diagonal(M, axis1=-2, axis2=-1)
            E = np.exp(-m * tau)
            var = (1.0 - E * E) * (0.5 / m)
            return (
                _contig(_batched_diag(E)),
                _contig(_batched_diag(1.0 / m)),
                _contig(_batched_diag(np.sqrt(var))),
            )
        E = np.stack([scipy.linalg.expm(-Mi * tau) for Mi in M])
        J = _covariance_batched(M)
        sig = _psd_sqrt_batched(J - E @ J @ np.swapaxes(E, -1, -2))
        return _contig(E), _contig(np.linalg.inv(M)), _contig(sig)


def _raise_blowup(X, Y, step, threshold):
    norms = np.linalg.norm(X, axis=1)
    if Y is not None:
        norms = np.maximum(norms, np.linalg.norm(Y, axis=1))
    bad = np.where(~np.isfinite(norms) | (norms > threshold))[0]
    k = int(bad[0]) if bad.size else int(np.argmax(norms))
    err = BlowUp(
        f"state norm {norms[k]:.3e} at step {step} (batch path {k}) "
        f"exceeds blow-up threshold {threshold:.1e}"
    )
    err.batch_index = k
    raise err


def _simulate_fast_slow_batch(
    model,
    epsilon,
    dw,
    dt,
    scheme="ExponentialEuler",
    stability_factor=0.1,
    blowup_threshold=1e8,
):
    """Step a batch of fast-slow pairs; dw has shape (N, n, d).

    Returns (X_hist, Y_hist) of shape (n+1, N, d).
    """
    scheme = _normalize_scheme(scheme)
    N, n, d = dw.shape
    if d != model.dim:
        raise ValidationError(f"noise dimension {d} does not match model dim {model.dim}")
    if not 0.0 < epsilon <= 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1], got {epsilon}")

    if scheme == "EulerMaruyama":
        lam_max = _lambda_max_estimate(model)
        limit = stability_factor * epsilon**2 / lam_max
        if dt > limit:
            raise StabilityViolation(
                f"EulerMaruyama needs dt <= {limit:.3e} "
                f"(= {stability_factor} * eps^2 / lambda_max ~ {lam_max:.3g}), got dt={dt:.3e}"
            )
    else:
        if dt > epsilon:
            raise StabilityViolation(
                f"ExponentialEuler needs dt <= eps = {epsilon}, got dt={dt:.3e}"
            )

    dws = _contig(np.swapaxes(dw, 0, 1))
    X = np.zeros((N, d))
    Y = np.zeros((N, d))
    Xh = np.empty((n + 1, N, d))
    Yh = np.empty((n + 1, N, d))
    Xh[0] = 0.0
    Yh[0] = 0.0
    K = kernels_for(d)

    if scheme == "EulerMaruyama":
        for i in range(n):
            M = _contig(model.friction(X))
            F = _contig(model.force(X))
            norm = K.em_fastslow_update(X, Y, M, F, dws[i], epsilon, dt)
            if not np.isfinite(norm) or norm > blowup_threshold:
                _raise_blowup(X, Y, i, blowup_threshold)
            Xh[i + 1] = X
            Yh[i + 1] = Y
        return Xh, Yh

    factory = _FrozenStepFactory(model, dt / epsilon**2, N)
    for i in range(n):
        E, Minv, sig = factory(X)
        F = _contig(model.force(X))
        norm = K.expeuler_fastslow_update(X, Y, E, Minv, F, dws[i], sig, epsilon, dt)
        if not np.isfinite(norm) or norm > blowup_threshold:
            _raise_blowup(X, Y, i, blowup_threshold)
        Xh[i + 1] = X
        Yh[i + 1] = Y
    return Xh, Yh


def _simulate_limit_batch(model, dw, dt, blowup_threshold=1e8):
    """Euler-Maruyama for the limit equation; dw has shape (N, n, d)."""
    N, n, d = dw.shape
    if d != model.dim:
        raise ValidationError(f"noise dimension {d} does not match model dim {model.dim}")
    dws = _contig(np.swapaxes(dw, 0, 1))
    X = np.zeros((N, d))
    Xh = np.empty((n + 1, N, d))
    Xh[0] = 0.0
    K = kernels_for(d)

    const_minv = None
    if model.constant_friction:
        M0 = model.friction(np.zeros((1, d)))[0]
        const_minv = _tile(np.linalg.inv(M0), N)
        zero_S = np.zeros((N, d))

    for i in range(n):
        if const_minv is not None:
            Minv, S = const_minv, zero_S
        else:
            M = model.friction(X)
            Minv = _contig(np.linalg.inv(M))
            S = _contig(_noise_drift_batched(model, X, Minv=Minv))
        F = _contig(model.force(X))
        norm = K.limit_em_update(X, Minv, S, F, dws[i], dt)
        if not np.isfinite(norm) or norm > blowup_threshold:
            _raise_blowup(X, None, i, blowup_threshold)
        Xh[i + 1] = X
    return Xh


def simulate_fast_slow(
    model,
    epsilon,
    noise,
    scheme="ExponentialEuler",
    stability_factor=0.1,
    blowup_threshold=1e8,
):
    """Integrate the fast-slow pair from (0, 0) along one noise bundle.

    Returns (X_path, Y_path) on the bundle's grid.  Raises
    StabilityViolation if dt violates the scheme's guard and BlowUp if a
    state leaves the finite-simulation region (norm above the threshold).
    """
    dw = noise.increments[None, :, :]
    Xh, Yh = _simulate_fast_slow_batch(
        model,
        epsilon,
        dw,
        noise.dt,
        scheme=scheme,
        stability_factor=stability_factor,
        blowup_threshold=blowup_threshold,
    )
    return (
        SamplePath(0.0, noise.dt, Xh[:, 0, :]),
        SamplePath(0.0, noise.dt, Yh[:, 0, :]),
    )


def simulate_limit(model, noise, blowup_threshold=1e8):
    """Euler-Maruyama path of the limit equation along one noise bundle.

    Consumes increments index-aligned with simulate_fast_slow so that paths
    driven by the same bundle are coupled through the same noise.
    """
    dw = noise.increments[None, :, :]
    Xh = _simulate_limit_batch(model, dw, noise.dt, blowup_threshold=blowup_threshold)
    return SamplePath(0.0, noise.dt, Xh[:, 0, :])


def simulate_frozen(M_at_x, noise, y0=None):
    """Exact sampling of the frozen process dY = -M Y dt + dW.

    Uses the one-step transition Y_{i+1} = E Y_i + eta_i with E = exp(-M dt)
    and Cov(eta) = J - E J E^T computed once per run (the Lyapunov-difference
    identity for int_0^dt exp(-Ms) exp(-M^T s) ds).
    """
    M = np.asarray(M_at_x, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"M_at_x must be square, got shape {M.shape}")
    if M.shape[0] != noise.d:
        raise ValidationError(f"M is {M.shape[0]}x{M.shape[0]} but noise has d={noise.d}")
    eigs = np.linalg.eigvals(M)
    if not np.all(eigs.real > 0):
        raise ValidationError("frozen process needs a stable M (eigenvalues in the right half-plane)")
    d = M.shape[0]
    J = covariance_J(M)
    E = scipy.linalg.expm(-M * noise.dt)
    C = J - E @ J @ E.T
    chalf = _psd_sqrt_batched(C[None])[0]
    if y0 is None:
        y0 = np.zeros(d)
    y0 = np.asarray(y0, dtype=float).reshape(d)
    xi = _contig(noise.increments / np.sqrt(noise.dt))
    vals = kernels_for(d).ou_exact_path(_contig(E), _contig(chalf), xi, _contig(y0))
    return SamplePath(0.0, noise.dt, vals)


def change_of_variables(x_path, y_path, epsilon):
    """Velocity and momentum views of the fast variable: V = Y/eps, P = eps*Y."""
    if not x_path.same_grid(y_path):
        raise GridMismatch("X and Y paths must share a grid")
    if not 0.0 < epsilon <= 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1], got {epsilon}")
    V = SamplePath(y_path.t0, y_path.dt, y_path.values / epsilon)
    P = SamplePath(y_path.t0, y_path.dt, y_path.values * epsilon)
    return V, P


def _fmt17(x):
    return format(float(x), ".17g")


def write_path_csv(target, x_path, y_path=None):
    """Dump a path (optionally with its velocity pair) as CSV.

    Header t,x1..xd[,y1..yd]; one row per grid point; 17 significant digits.
    ``target`` is a file path or an open text handle.
    """
    if y_path is not None and not x_path.same_grid(y_path):
        raise GridMismatch("X and Y paths must share a grid")
    d = x_path.dim
    cols = ["t"] + [f"x{j + 1}" for j in range(d)]
    if y_path is not None:
        cols += [f"y{j + 1}" for j in range(y_path.dim)]
    lines = [",".join(cols)]
    times = x_path.times
    for i in range(x_path.values.shape[0]):
        row = [_fmt17(times[i])]
        row += [_fmt17(v) for v in x_path.values[i]]
        if y_path is not None:
            row += [_fmt17(v) for v in y_path.values[i]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
