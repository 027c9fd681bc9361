"""Model definitions: friction/force fields, observables, assumption checks.

A model packages the coefficient fields of the second-order system together
with the constants the theory needs (ellipticity floor, force bound).  Field
callables are vectorized: they accept x of shape (..., d) and return arrays
with the field axes appended, so simulation engines can evaluate whole path
batches in one call.

Shapes:
    friction(x):      (..., d) -> (..., d, d)
    force(x):         (..., d) -> (..., d)
    friction_grad(x): (..., d) -> (..., d, d, d), entry [..., j, k, l] is
                      the derivative of friction[k, l] along x_j.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteField, UnknownModel, ValidationError

__all__ = [
    "ModelSpec",
    "ScalarObservableSpec",
    "AssumptionCheck",
    "AssumptionReport",
    "builtin_model",
    "registry_names",
    "check_assumptions",
    "default_probe_cloud",
    "synthesized_friction_grad",
    "friction_grad_of",
]


@dataclass(frozen=True)
class ModelSpec:
    """Coefficient fields and constants of one second-order system.

    ``lam`` is the uniform ellipticity floor: the symmetric part of the
    friction matrix must satisfy sym(M(x)) >= lam * id everywhere.
    ``force_bound`` bounds |force(x)| in Euclidean norm.  ``horizon`` is the
    default time horizon experiments use for this model.

    ``constant_friction`` / ``diagonal_friction`` are structure hints the
    simulation engines use to pick cheap evaluation paths; they never change
    semantics.
    """

    name: str
    dim: int
    friction: Callable[[np.ndarray], np.ndarray]
    force: Callable[[np.ndarray], np.ndarray]
    lam: float
    horizon: float = 1.0
    friction_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    force_bound: float = np.inf
    constant_friction: bool = False
    diagonal_friction: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"model dim must be >= 1, got {self.dim}")
        if not self.lam > 0:
            raise ValidationError(f"model lam must be positive, got {self.lam}")
        if not self.horizon > 0:
            raise ValidationError(f"model horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class ScalarObservableSpec:
    """A scalar observable of the pair (x, y), linear in products of y.

    kind "xyy": f(x, y) = x_i * g(x) * y_k * y_l
    kind "yy":  f(x, y) = g(x) * y_k * y_l

    Indices i, k, l are 1-based (coordinate numbers, matching the usual
    component notation); they are converted internally.  g must be
    vectorized, (..., d) -> (...); g_grad, if given, returns (..., d).
    """

    kind: str
    k: int
    l: int
    i: int = 1
    g: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: np.ones(x.shape[:-1]))
    g_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("xyy", "yy"):
            raise ValidationError(f"observable kind must be 'xyy' or 'yy', got {self.kind!r}")
        for label, idx in (("i", self.i), ("k", self.k), ("l", self.l)):
            if idx < 1:
                raise ValidationError(f"observable index {label} must be >= 1, got {idx}")

    def validate_dim(self, dim):
        indices = (self.k, self.l) if self.kind == "yy" else (self.i, self.k, self.l)
        for idx in indices:
            if idx > dim:
                raise ValidationError(
                    f"observable index {idx} out of range for dimension {dim}"
                )


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValidationError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _batched_diag(v):
    """(..., d) -> (..., d, d) with v on the diagonal."""
    d = v.shape[-1]
    out = np.zeros(v.shape + (d,))
    idx = np.arange(d)
    out[..., idx, idx] = v
    return out


def _constant_model(name, mat, lam):
    mat = np.asarray(mat, dtype=float)
    d = mat.shape[0]

    def friction(x):
        x = _as_points(x, d)
        out = np.empty(x.shape[:-1] + (d, d))
        out[...] = mat
        return out

    def force(x):
        x = _as_points(x, d)
        return np.zeros(x.shape)

    def friction_grad(x):
        x = _as_points(x, d)
        return np.zeros(x.shape[:-1] + (d, d, d))

    return ModelSpec(
        name=name,
        dim=d,
        friction=friction,
        force=force,
        lam=lam,
        friction_grad=friction_grad,
        force_bound=0.0,
        constant_friction=True,
        diagonal_friction=bool(np.allclose(mat, np.diag(np.diag(mat)))),
    )


def _scalar_sin_model():
    def friction(x):
        x = _as_points(x, 1)
        return (2.0 + np.sin(x[..., 0]))[..., None, None]

    def friction_grad(x):
        x = _as_points(x, 1)
        return np.cos(x[..., 0])[..., None, None, None]

    def force(x):
        x = _as_points(x, 1)
        return np.sin(x)

    return ModelSpec(
        name="scalar_sin",
        dim=1,
        friction=friction,
        force=force,
        lam=1.0,
        friction_grad=friction_grad,
        force_bound=1.0,
        diagonal_friction=True,
    )


def _diag_tanh_model():
    def friction(x):
        x = _as_points(x, 2)
        return _batched_diag(2.0 + np.tanh(x))

    def friction_grad(x):
        x = _as_points(x, 2)
        # only the [j, j, j] entries are nonzero: d/dx_j (2 + tanh x_j)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        sech2 = 1.0 / np.cosh(x) ** 2
        for j in range(2):
            out[..., j, j, j] = sech2[..., j]
        return out

    def force(x):
        x = _as_points(x, 2)
        return np.stack([np.sin(x[..., 1]), np.sin(x[..., 0])], axis=-1)

    return ModelSpec(
        name="diag_tanh",
        dim=2,
        friction=friction,
        force=force,
        lam=1.0,
        friction_grad=friction_grad,
        force_bound=np.sqrt(2.0),
        diagonal_friction=True,
    )


_REGISTRY = {
    "const_iso": lambda: _constant_model("const_iso", np.eye(2), lam=1.0),
    "const_rot2": lambda: _constant_model(
        "const_rot2", np.array([[1.0, 1.0], [-1.0, 1.0]]), lam=1.0
    ),
    "scalar_sin": _scalar_sin_model,
    "diag_tanh": _diag_tanh_model,
}

_CACHE = {}


def registry_names():
    return sorted(_REGISTRY)


def builtin_model(name):
    """Look up a registry model by name."""
    if name not in _REGISTRY:
        raise UnknownModel(
            f"unknown model {name!r}; registry: {', '.join(registry_names())}"
        )
    if name not in _CACHE:
        _CACHE[name] = _REGISTRY[name]()
    return _CACHE[name]


def synthesized_friction_grad(model, h=1e-5):
    """Central-difference derivative field of the friction matrix."""

    def grad(x):
        x = _as_points(x, model.dim)
        out = np.empty(x.shape[:-1] + (model.dim,) * 3)
        for j in range(model.dim):
            xp = x.copy()
            xm = x.copy()
            xp[..., j] += h
            xm[..., j] -= h
            out[..., j, :, :] = (model.friction(xp) - model.friction(xm)) / (2.0 * h)
        return out

    return grad


def friction_grad_of(model, h=1e-5):
    """The model's friction gradient, synthesized by differences if absent."""
    if model.friction_grad is not None:
        return model.friction_grad
    return synthesized_friction_grad(model, h=h)


def default_probe_cloud(dim, n_probes=200, radius=5.0, rng_seed=0):
    """Uniform probe points in [-radius, radius]^dim."""
    gen = np.random.Generator(np.random.Philox(key=rng_seed & ((1 << 128) - 1)))
    return gen.uniform(-radius, radius, size=(n_probes, dim))


@dataclass(frozen=True)
class AssumptionCheck:
    """One named check: measured value, bound it was held to, worst witness.

    ``bound`` is None for report-only quantities (empirical Lipschitz
    quotients have no declared constants; they just have to be finite).
    """

    name: str
    passed: bool
    value: float
    bound: Optional[float]
    witness: np.ndarray


@dataclass(frozen=True)
class AssumptionReport:
    model_name: str
    passed: bool
    checks: tuple
    n_probes: int

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteField(f"{name} produced non-finite entries")


def _pair_indices(n_probes, max_pairs, rng_seed):
    i, j = np.triu_indices(n_probes, k=1)
    if i.size > max_pairs:
        gen = np.random.Generator(np.random.Philox(key=(rng_seed ^ 0xA5) & ((1 << 128) - 1)))
        sel = gen.choice(i.size, size=max_pairs, replace=False)
        i, j = i[sel], j[sel]
    return i, j


def _lipschitz_check(name, field_values, probes, i, j):
    fi = field_values[i].reshape(i.size, -1)
    fj = field_values[j].reshape(j.size, -1)
    dist = np.linalg.norm(probes[i] - probes[j], axis=1)
    quot = np.linalg.norm(fi - fj, axis=1) / dist
    worst = int(np.argmax(quot))
    value = float(quot[worst])
    witness = np.stack([probes[i[worst]], probes[j[worst]]])
    return AssumptionCheck(name, bool(np.isfinite(value)), value, None, witness)


def check_assumptions(model, probes=None, rng_seed=0, grad_tol=1e-5, max_pairs=50_000):
    """Evaluate the standing assumptions on a probe cloud.

    Checks with declared bounds (ellipticity floor, force bound, gradient
    consistency) can fail; empirical Lipschitz quotients and the inverse
    friction bound are reported and only have to be finite.  Raises
    NonFiniteField if any field evaluation returns NaN or infinity.
    """
    if probes is None:
        probes = default_probe_cloud(model.dim, rng_seed=rng_seed)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[-1] != model.dim:
        raise ValidationError(
            f"probes have dimension {probes.shape[-1]}, model has {model.dim}"
        )

    M = model.friction(probes)
    F = model.force(probes)
    _require_finite("friction", M)
    _require_finite("force", F)
    Minv = np.linalg.inv(M)
    _require_finite("friction inverse", Minv)
    grad_fd = synthesized_friction_grad(model)(probes)
    _require_finite("friction gradient", grad_fd)

    checks = []

    sym_eigs = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    worst = int(np.argmin(sym_eigs[:, 0]))
    val = float(sym_eigs[worst, 0])
    checks.append(
        AssumptionCheck("ellipticity", val >= model.lam - 1e-12, val, model.lam, probes[worst])
    )

    fnorm = np.linalg.norm(F, axis=-1)
    worst = int(np.argmax(fnorm))
    val = float(fnorm[worst])
    checks.append(
        AssumptionCheck(
            "force_bound", val <= model.force_bound + 1e-12, val, model.force_bound, probes[worst]
        )
    )

    inv_norm = np.linalg.svd(Minv, compute_uv=False)[..., 0]
    worst = int(np.argmax(inv_norm))
    val = float(inv_norm[worst])
    checks.append(AssumptionCheck("inverse_friction_bound", np.isfinite(val), val, None, probes[worst]))

    i, j = _pair_indices(probes.shape[0], max_pairs, rng_seed)
    if i.size:
        grad_inv = -np.einsum("pab,pjbc,pcd->pjad", Minv, grad_fd, Minv)
        checks.append(_lipschitz_check("lipschitz_friction", M, probes, i, j))
        checks.append(_lipschitz_check("lipschitz_force", F, probes, i, j))
        checks.append(_lipschitz_check("lipschitz_inverse_friction", Minv, probes, i, j))
        checks.append(
            _lipschitz_check("lipschitz_inverse_friction_grad", grad_inv, probes, i, j)
        )

    if model.friction_grad is not None:
        grad_an = model.friction_grad(probes)
        _require_finite("friction_grad", grad_an)
        scale = 1.0 + np.linalg.norm(grad_fd.reshape(probes.shape[0], -1), axis=1)
        err = np.linalg.norm((grad_an - grad_fd).reshape(probes.shape[0], -1), axis=1) / scale
        worst = int(np.argmax(err))
        val = float(err[worst])
        checks.append(
            AssumptionCheck("friction_grad_consistency", val <= grad_tol, val, grad_tol, probes[worst])
        )

    passed = all(c.passed for c in checks)
    return AssumptionReport(model.name, passed, tuple(checks), probes.shape[0])
