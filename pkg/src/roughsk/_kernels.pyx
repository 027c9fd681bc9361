# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled hot kernels.

Mirrors roughsk._kernels_py (the numpy fallback); see that module for the
shared conventions.  State dimension is capped at 32 so per-path scratch
can live on the stack; the dispatch layer falls back to numpy above that.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()

BACKEND = "compiled"

DEF MAXD = 32


cdef inline void _require_small(Py_ssize_t d) except *:
    if d > MAXD:
        raise ValueError("compiled kernels support d <= %d, got %d" % (MAXD, d))


def level1_max_ratio(const double[:, ::1] values, double dt, double alpha,
                     const cnp.int64_t[::1] gaps):
    """max over scanned pairs of |X_{i+g} - X_i| / (g*dt)^alpha."""
    cdef Py_ssize_t npts = values.shape[0], d = values.shape[1]
    cdef Py_ssize_t gi, i, k
    cdef cnp.int64_t g
    cdef double best = 0.0, gbest, s, diff, denom
    with nogil:
        for gi in range(gaps.shape[0]):
            g = gaps[gi]
            if g <= 0 or g >= npts:
                continue
            gbest = 0.0
            for i in range(npts - g):
                s = 0.0
                for k in range(d):
                    diff = values[i + g, k] - values[i, k]
                    s += diff * diff
                if s > gbest:
                    gbest = s
            denom = pow(g * dt, alpha)
            s = sqrt(gbest) / denom
            if s > best:
                best = s
    return best


def level1_diff_max_ratio(const double[:, ::1] values_a, const double[:, ::1] values_b,
                          double dt, double alpha, const cnp.int64_t[::1] gaps):
    """Same scan applied to increments of the difference path A - B."""
    cdef Py_ssize_t npts = values_a.shape[0], d = values_a.shape[1]
    cdef Py_ssize_t gi, i, k
    cdef cnp.int64_t g
    cdef double best = 0.0, gbest, s, diff, denom
    with nogil:
        for gi in range(gaps.shape[0]):
            g = gaps[gi]
            if g <= 0 or g >= npts:
                continue
            gbest = 0.0
            for i in range(npts - g):
                s = 0.0
                for k in range(d):
                    diff = (values_a[i + g, k] - values_a[i, k]) \
                         - (values_b[i + g, k] - values_b[i, k])
                    s += diff * diff
                if s > gbest:
                    gbest = s
            denom = pow(g * dt, alpha)
            s = sqrt(gbest) / denom
            if s > best:
                best = s
    return best


def level2_max_ratio(const double[:, :, ::1] prefix, const double[:, ::1] values,
                     double dt, double expo, const cnp.int64_t[::1] gaps):
    """max over scanned pairs of ||A_{i,i+g}||_F / (g*dt)^expo.

    A_{i,j} = A_{0,j} - A_{0,i} - X_{0,i} (x) X_{i,j} with A_{0,.} = prefix.
    """
    cdef Py_ssize_t npts = values.shape[0], d = values.shape[1]
    cdef Py_ssize_t gi, i, j, k, l
    cdef cnp.int64_t g
    cdef double best = 0.0, gbest, s, a, denom
    with nogil:
        for gi in range(gaps.shape[0]):
            g = gaps[gi]
            if g <= 0 or g >= npts:
                continue
            gbest = 0.0
            for i in range(npts - g):
                j = i + g
                s = 0.0
                for k in range(d):
                    for l in range(d):
                        a = prefix[j, k, l] - prefix[i, k, l] \
                            - (values[i, k] - values[0, k]) * (values[j, l] - values[i, l])
                        s += a * a
                if s > gbest:
                    gbest = s
            denom = pow(g * dt, expo)
            s = sqrt(gbest) / denom
            if s > best:
                best = s
    return best


def level2_diff_max_ratio(const double[:, :, ::1] prefix_a, const double[:, ::1] values_a,
                          const double[:, :, ::1] prefix_b, const double[:, ::1] values_b,
                          double dt, double expo, const cnp.int64_t[::1] gaps):
    """Pair scan of ||A_{i,i+g} - B_{i,i+g}||_F / (g*dt)^expo."""
    cdef Py_ssize_t npts = values_a.shape[0], d = values_a.shape[1]
    cdef Py_ssize_t gi, i, j, k, l
    cdef cnp.int64_t g
    cdef double best = 0.0, gbest, s, a, b, denom
    with nogil:
        for gi in range(gaps.shape[0]):
            g = gaps[gi]
            if g <= 0 or g >= npts:
                continue
            gbest = 0.0
            for i in range(npts - g):
                j = i + g
                s = 0.0
                for k in range(d):
                    for l in range(d):
                        a = prefix_a[j, k, l] - prefix_a[i, k, l] \
                            - (values_a[i, k] - values_a[0, k]) * (values_a[j, l] - values_a[i, l])
                        b = prefix_b[j, k, l] - prefix_b[i, k, l] \
                            - (values_b[i, k] - values_b[0, k]) * (values_b[j, l] - values_b[i, l])
                        a -= b
                        s += a * a
                if s > gbest:
                    gbest = s
            denom = pow(g * dt, expo)
            s = sqrt(gbest) / denom
            if s > best:
                best = s
    return best


def step_areas(const double[:, ::1] values, Py_ssize_t coarsen, bint midpoint):
    """Second-order increments of each coarse step from its fine sub-steps."""
    cdef Py_ssize_t nf = values.shape[0] - 1, d = values.shape[1]
    cdef Py_ssize_t nc = nf // coarsen
    cdef Py_ssize_t c, u, k, l, idx, base
    cdef double w
    out_arr = np.zeros((nc, d, d))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for c in range(nc):
            base = c * coarsen
            for u in range(coarsen):
                idx = base + u
                for k in range(d):
                    if midpoint:
                        w = 0.5 * (values[idx, k] + values[idx + 1, k]) - values[base, k]
                    else:
                        w = values[idx, k] - values[base, k]
                    for l in range(d):
                        out[c, k, l] += w * (values[idx + 1, l] - values[idx, l])
    return out_arr


def prefix_areas(const double[:, ::1] coarse_values, const double[:, :, ::1] steps):
    """Running areas A_{0,j} from per-step areas via the additivity relation."""
    cdef Py_ssize_t nc = steps.shape[0], d = steps.shape[1]
    cdef Py_ssize_t j, k, l
    out_arr = np.zeros((nc + 1, d, d))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for j in range(nc):
            for k in range(d):
                for l in range(d):
                    out[j + 1, k, l] = out[j, k, l] + steps[j, k, l] \
                        + (coarse_values[j, k] - coarse_values[0, k]) \
                        * (coarse_values[j + 1, l] - coarse_values[j, l])
    return out_arr


def em_fastslow_update(double[:, ::1] X, double[:, ::1] Y, const double[:, :, ::1] M,
                       const double[:, ::1] F, const double[:, ::1] dW,
                       double eps, double dt):
    """One explicit Euler step of the fast-slow pair, batch in place.

    X_{n+1} = X_n + (dt/eps) Y_n
    Y_{n+1} = Y_n - (dt/eps^2) M Y_n + (dt/eps) F + (1/eps) dW
    """
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t n, k, l
    cdef double ynew[MAXD]
    cdef double a, b, c, my, sx, sy, worst = 0.0
    _require_small(d)
    a = dt / (eps * eps)
    b = dt / eps
    c = 1.0 / eps
    with nogil:
        for n in range(N):
            sx = 0.0
            sy = 0.0
            for k in range(d):
                my = 0.0
                for l in range(d):
                    my += M[n, k, l] * Y[n, l]
                ynew[k] = Y[n, k] - a * my + b * F[n, k] + c * dW[n, k]
            for k in range(d):
                X[n, k] += b * Y[n, k]
                Y[n, k] = ynew[k]
                sx += X[n, k] * X[n, k]
                sy += Y[n, k] * Y[n, k]
            if sx > worst:
                worst = sx
            if sy > worst:
                worst = sy
    return sqrt(worst)


def expeuler_fastslow_update(double[:, ::1] X, double[:, ::1] Y,
                             const double[:, :, ::1] E, const double[:, :, ::1] Minv,
                             const double[:, ::1] F, const double[:, ::1] dW,
                             const double[:, :, ::1] sighalf,
                             double eps, double dt):
    """One frozen-coefficient exponential step of the fast-slow pair.

    See the numpy fallback for the derivation of the update formulas.
    """
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t n, k, l
    cdef double t1[MAXD]
    cdef double d1[MAXD]
    cdef double ynew[MAXD]
    cdef double w[MAXD]
    cdef double isqdt, acc, sx, sy, worst = 0.0
    _require_small(d)
    isqdt = 1.0 / sqrt(dt)
    with nogil:
        for n in range(N):
            for k in range(d):
                acc = F[n, k]
                for l in range(d):
                    acc -= E[n, k, l] * F[n, l]
                t1[k] = acc
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += Minv[n, k, l] * t1[l]
                d1[k] = acc
            for k in range(d):
                acc = eps * d1[k]
                for l in range(d):
                    acc += E[n, k, l] * Y[n, l] + sighalf[n, k, l] * dW[n, l] * isqdt
                ynew[k] = acc
            for k in range(d):
                w[k] = eps * (Y[n, k] - ynew[k]) + F[n, k] * dt + dW[n, k]
            sx = 0.0
            sy = 0.0
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += Minv[n, k, l] * w[l]
                X[n, k] += acc
                Y[n, k] = ynew[k]
                sx += X[n, k] * X[n, k]
                sy += Y[n, k] * Y[n, k]
            if sx > worst:
                worst = sx
            if sy > worst:
                worst = sy
    return sqrt(worst)


def limit_em_update(double[:, ::1] X, const double[:, :, ::1] Minv, const double[:, ::1] S,
                    const double[:, ::1] F, const double[:, ::1] dW, double dt):
    """One explicit Euler step of the limit equation, batch in place."""
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t n, k, l
    cdef double acc, sx, worst = 0.0
    _require_small(d)
    with nogil:
        for n in range(N):
            sx = 0.0
            for k in range(d):
                acc = S[n, k] * dt
                for l in range(d):
                    acc += Minv[n, k, l] * (F[n, l] * dt + dW[n, l])
                X[n, k] += acc
            for k in range(d):
                sx += X[n, k] * X[n, k]
            if sx > worst:
                worst = sx
    return sqrt(worst)


def ou_exact_path(const double[:, ::1] E, const double[:, ::1] chalf, const double[:, ::1] xi,
                  const double[::1] y0):
    """Exact sampled path Y_{i+1} = E Y_i + chalf xi_i starting at y0."""
    cdef Py_ssize_t n = xi.shape[0], d = xi.shape[1]
    cdef Py_ssize_t i, k, l
    cdef double y[MAXD]
    cdef double ynext[MAXD]
    cdef double acc
    _require_small(d)
    out_arr = np.empty((n + 1, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for k in range(d):
            y[k] = y0[k]
            out[0, k] = y[k]
        for i in range(n):
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += E[k, l] * y[l] + chalf[k, l] * xi[i, l]
                ynext[k] = acc
            for k in range(d):
                y[k] = ynext[k]
                out[i + 1, k] = y[k]
    return out_arr
