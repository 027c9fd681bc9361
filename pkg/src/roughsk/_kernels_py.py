"""Pure numpy implementations of the hot kernels.

This module mirrors the signatures of the compiled extension
``roughsk._kernels`` and is selected at import time when the extension is
unavailable (or when ROUGHSK_KERNELS=py).  Semantics are identical; the
compiled variant only removes Python/temporary overhead.

Conventions shared by both backends:

* paths are float64 arrays of shape (n+1, d), row i = value at t_i,
* batched states are (N, d), batched matrices (N, d, d), all C ordered,
* ``gaps`` is an int64 array of grid gaps g; a pair (i, i+g) is scanned
  for every admissible i and every listed g,
* update kernels mutate X (and Y) in place and return the largest
  Euclidean state norm seen after the update, for blow-up checks.
"""

import numpy as np

BACKEND = "python"


def level1_max_ratio(values, dt, alpha, gaps):
    """max over scanned pairs of |X_{i+g} - X_i| / (g*dt)^alpha."""
    npts = values.shape[0]
    best = 0.0
    for g in np.asarray(gaps, dtype=np.int64):
        if g <= 0 or g >= npts:
            continue
        incr = values[g:] - values[:-g]
        norms = np.sqrt(np.sum(incr * incr, axis=1))
        best = max(best, float(norms.max()) / (g * dt) ** alpha)
    return best


def level1_diff_max_ratio(values_a, values_b, dt, alpha, gaps):
    """Same scan applied to increments of the difference path A - B."""
    npts = values_a.shape[0]
    best = 0.0
    for g in np.asarray(gaps, dtype=np.int64):
        if g <= 0 or g >= npts:
            continue
        incr = (values_a[g:] - values_a[:-g]) - (values_b[g:] - values_b[:-g])
        norms = np.sqrt(np.sum(incr * incr, axis=1))
        best = max(best, float(norms.max()) / (g * dt) ** alpha)
    return best


def _pair_areas(prefix, values, g):
    # two-parameter area over (i, i+g) reconstructed from running areas:
    # A_{i,j} = A_{0,j} - A_{0,i} - X_{0,i} (x) X_{i,j}
    left = values[:-g] - values[0]
    incr = values[g:] - values[:-g]
    return prefix[g:] - prefix[:-g] - left[:, :, None] * incr[:, None, :]


def level2_max_ratio(prefix, values, dt, expo, gaps):
    """max over scanned pairs of ||A_{i,i+g}||_F / (g*dt)^expo."""
    npts = values.shape[0]
    best = 0.0
    for g in np.asarray(gaps, dtype=np.int64):
        if g <= 0 or g >= npts:
            continue
        areas = _pair_areas(prefix, values, g)
        norms = np.sqrt(np.sum(areas * areas, axis=(1, 2)))
        best = max(best, float(norms.max()) / (g * dt) ** expo)
    return best


def level2_diff_max_ratio(prefix_a, values_a, prefix_b, values_b, dt, expo, gaps):
    """Pair scan of ||A_{i,i+g} - B_{i,i+g}||_F / (g*dt)^expo."""
    npts = values_a.shape[0]
    best = 0.0
    for g in np.asarray(gaps, dtype=np.int64):
        if g <= 0 or g >= npts:
            continue
        diff = _pair_areas(prefix_a, values_a, g) - _pair_areas(prefix_b, values_b, g)
        norms = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
        best = max(best, float(norms.max()) / (g * dt) ** expo)
    return best


def step_areas(values, coarsen, midpoint):
    """Second-order increments of one coarse step from its fine sub-steps.

    Returns (nc, d, d) with entry [c] = sum over fine steps u inside coarse
    step c of w_u (x) (X_{u+1} - X_u), where w_u = X_u - X_{base(c)} for the
    left-point rule and w_u = (X_u + X_{u+1})/2 - X_{base(c)} for the
    midpoint rule.
    """
    nf = values.shape[0] - 1
    d = values.shape[1]
    nc = nf // coarsen
    dx = (values[1:] - values[:-1]).reshape(nc, coarsen, d)
    base = values[: nf : coarsen][:, None, :]
    if midpoint:
        w = 0.5 * (values[:-1] + values[1:]).reshape(nc, coarsen, d) - base
    else:
        w = values[:-1].reshape(nc, coarsen, d) - base
    return np.einsum("cuk,cul->ckl", w, dx)


def prefix_areas(coarse_values, steps):
    """Running areas A_{0,j} from per-step areas via the additivity relation.

    A_{0,j+1} = A_{0,j} + steps[j] + (X_j - X_0) (x) (X_{j+1} - X_j).
    """
    nc, d = steps.shape[0], steps.shape[1]
    out = np.zeros((nc + 1, d, d))
    left = coarse_values[:-1] - coarse_values[0]
    incr = coarse_values[1:] - coarse_values[:-1]
    cross = left[:, :, None] * incr[:, None, :]
    np.cumsum(steps + cross, axis=0, out=out[1:])
    return out


def _max_state_norm(X, Y=None):
    m = float(np.sqrt(np.sum(X * X, axis=1)).max())
    if Y is not None:
        m = max(m, float(np.sqrt(np.sum(Y * Y, axis=1)).max()))
    return m


def em_fastslow_update(X, Y, M, F, dW, eps, dt):
    """One explicit Euler step of the fast-slow pair, batch in place.

    X_{n+1} = X_n + (dt/eps) Y_n
    Y_{n+1} = Y_n - (dt/eps^2) M Y_n + (dt/eps) F + (1/eps) dW
    """
    my = np.einsum("nkl,nl->nk", M, Y)
    xnew = X + (dt / eps) * Y
    ynew = Y - (dt / eps**2) * my + (dt / eps) * F + dW / eps
    X[...] = xnew
    Y[...] = ynew
    return _max_state_norm(X, Y)


def expeuler_fastslow_update(X, Y, E, Minv, F, dW, sighalf, eps, dt):
    """One frozen-coefficient exponential step of the fast-slow pair.

    With coefficients frozen at X_n over the step, the velocity block is an
    exact Ornstein-Uhlenbeck transition,

        Y_{n+1} = E Y_n + eps M^{-1} (I - E) F + Sigma^{1/2} dW/sqrt(dt),

    E = exp(-M dt/eps^2) and Sigma = J - E J E^T the exact one-step noise
    covariance.  The position block then uses the frozen-coefficient
    integral identity of the pair (no extra approximation),

        X_{n+1} = X_n + eps M^{-1}(Y_n - Y_{n+1}) + M^{-1} F dt + M^{-1} dW,

    which keeps the X/Y noise coupling exact within the step.
    """
    t1 = F - np.einsum("nkl,nl->nk", E, F)
    d1 = np.einsum("nkl,nl->nk", Minv, t1)
    ynew = (
        np.einsum("nkl,nl->nk", E, Y)
        + eps * d1
        + np.einsum("nkl,nl->nk", sighalf, dW) / np.sqrt(dt)
    )
    w = eps * (Y - ynew) + F * dt + dW
    X += np.einsum("nkl,nl->nk", Minv, w)
    Y[...] = ynew
    return _max_state_norm(X, Y)


def limit_em_update(X, Minv, S, F, dW, dt):
    """One explicit Euler step of the limit equation, batch in place.

    X_{n+1} = X_n + (S + M^{-1} F) dt + M^{-1} dW.
    """
    X += S * dt + np.einsum("nkl,nl->nk", Minv, F * dt + dW)
    return _max_state_norm(X)


def ou_exact_path(E, chalf, xi, y0):
    """Exact sampled path of a frozen linear-friction velocity process.

    Y_{i+1} = E Y_i + chalf xi_i with E and chalf constant; returns the
    (n+1, d) trajectory starting at y0.
    """
    n, d = xi.shape
    out = np.empty((n + 1, d))
    out[0] = y0
    y = np.array(y0, dtype=float)
    for i in range(n):
        y = E @ y + chalf @ xi[i]
        out[i + 1] = y
    return out
