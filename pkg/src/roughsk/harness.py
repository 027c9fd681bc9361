"""Monte Carlo experiment driver, statistics, and report serialization.

The three runners share one execution pattern: for every epsilon in the
configured ladder, simulate n_paths coupled path pairs in vectorized
batches, reduce each path to scalar metrics, and aggregate mean and
standard error per metric.  Path k of epsilon index e always draws its
noise from the stream id stream_key(seed, e, k), so results are
reproducible across platforms, chunk sizes, and worker counts; the
reduction itself runs in a fixed path order.

Reports serialize to a canonical JSON form (sorted keys, 17 significant
digits) so identical configs produce identical bytes.  Wall time is kept
on the report object but excluded from the serialized bytes for exactly
that reason.

ROUGHSK_THREADS caps the number of worker threads used for path chunks
(default 1); any value yields identical output.
"""

import hashlib
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .backend import kernel_backend
from .errors import BlowUp, InsufficientData, ValidationError
from .models import ScalarObservableSpec, builtin_model
from .averaging import averaging_error
from .roughpath import ito_lift, limit_lift, rho_components
from .sde import (
    _normalize_scheme,
    _simulate_fast_slow_batch,
    _simulate_limit_batch,
    sample_noise,
    stream_key,
)

__all__ = [
    "FixedDt",
    "EpsScaled",
    "ExperimentConfig",
    "ConvergenceReport",
    "HolderScalingReport",
    "AveragingReport",
    "run_convergence",
    "run_holder_scaling",
    "run_averaging_validation",
    "canonical_json",
    "config_hash",
]

DEFAULT_EPSILONS = (0.5, 0.354, 0.25, 0.177, 0.125)

_CHUNK = 256


@dataclass(frozen=True)
class FixedDt:
    """Fine-grid rule: the same dt for every epsilon."""

    dt: float

    def resolve(self, epsilon):
        return self.dt

    def to_dict(self):
        return {"kind": "fixed_dt", "dt": self.dt}


@dataclass(frozen=True)
class EpsScaled:
    """Fine-grid rule: dt = c * epsilon^2, resolving the fast time scale."""

    c: float

    def resolve(self, epsilon):
        return self.c * epsilon**2

    def to_dict(self):
        return {"kind": "eps_scaled", "c": self.c}


def _parse_rule(obj):
    if isinstance(obj, (FixedDt, EpsScaled)):
        return obj
    if isinstance(obj, dict):
        extra = set(obj) - {"kind", "dt", "c"}
        if extra:
            raise ValidationError(f"unknown fine_dt_rule keys: {sorted(extra)}")
        kind = obj.get("kind")
        if kind == "fixed_dt":
            if "dt" not in obj or "c" in obj:
                raise ValidationError("fixed_dt rule takes exactly the key 'dt'")
            return FixedDt(float(obj["dt"]))
        if kind == "eps_scaled":
            if "c" not in obj or "dt" in obj:
                raise ValidationError("eps_scaled rule takes exactly the key 'c'")
            return EpsScaled(float(obj["c"]))
        raise ValidationError(f"fine_dt_rule kind must be 'fixed_dt' or 'eps_scaled', got {kind!r}")
    raise ValidationError(f"cannot parse fine_dt_rule from {type(obj).__name__}")


_CONFIG_FIELDS = (
    "model_name",
    "epsilons",
    "fine_dt_rule",
    "coarsen",
    "horizon",
    "n_paths",
    "alpha",
    "p_moments",
    "seed",
    "scheme",
    "outputs",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters; the unit of reproducibility."""

    model_name: str
    epsilons: tuple = DEFAULT_EPSILONS
    fine_dt_rule: object = EpsScaled(0.05)
    coarsen: int = 16
    horizon: Optional[float] = None
    n_paths: int = 100
    alpha: float = 0.4
    p_moments: tuple = (1, 2)
    seed: int = 0
    scheme: str = "ExponentialEuler"
    outputs: str = "."

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "fine_dt_rule", _parse_rule(self.fine_dt_rule))
        object.__setattr__(self, "p_moments", tuple(int(p) for p in self.p_moments))
        object.__setattr__(self, "scheme", _normalize_scheme(self.scheme))
        if not self.epsilons:
            raise ValidationError("epsilons must be non-empty")
        for e in self.epsilons:
            if not 0.0 < e <= 1.0:
                raise ValidationError(f"epsilons must lie in (0, 1], got {e}")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ValidationError(f"epsilons must be strictly decreasing, got {self.epsilons}")
        if self.coarsen < 2:
            raise ValidationError(f"coarsen must be >= 2, got {self.coarsen}")
        if self.horizon is not None and not self.horizon > 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.n_paths < 2:
            raise ValidationError(f"n_paths must be >= 2, got {self.n_paths}")
        if not 1.0 / 3.0 < self.alpha < 0.5:
            raise ValidationError(f"alpha must lie in (1/3, 1/2), got {self.alpha}")
        if not self.p_moments or any(p < 1 for p in self.p_moments):
            raise ValidationError(f"p_moments must be positive integers, got {self.p_moments}")
        rule = self.fine_dt_rule
        if isinstance(rule, FixedDt) and not rule.dt > 0:
            raise ValidationError(f"fixed dt must be positive, got {rule.dt}")
        if isinstance(rule, EpsScaled) and not rule.c > 0:
            raise ValidationError(f"eps_scaled c must be positive, got {rule.c}")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(data) - set(_CONFIG_FIELDS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "model_name" not in data:
            raise ValidationError("config requires model_name")
        return cls(**data)

    def to_dict(self):
        return {
            "model_name": self.model_name,
            "epsilons": list(self.epsilons),
            "fine_dt_rule": self.fine_dt_rule.to_dict(),
            "coarsen": self.coarsen,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
            "alpha": self.alpha,
            "p_moments": list(self.p_moments),
            "seed": self.seed,
            "scheme": self.scheme,
            "outputs": self.outputs,
        }

    def replace(self, **kwargs):
        merged = self.to_dict()
        merged.update(kwargs)
        return ExperimentConfig(**merged)


def _fmt17(x):
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite number {x}")
    return format(float(x), ".17g")


def _emit(obj, indent):
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [
            f'{inner}"{k}": {_emit(obj[k], indent + 1)}' for k in sorted(obj)
        ]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [f"{inner}{_emit(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt17(float(obj))
    raise ValidationError(f"cannot serialize {type(obj).__name__} to report JSON")


def canonical_json(obj):
    """Deterministic JSON: sorted keys, 17-significant-digit decimals."""
    return _emit(obj, 0) + "\n"


def config_hash(config):
    return hashlib.sha256(canonical_json(config.to_dict()).encode()).hexdigest()


def _grid_for(config, model, epsilon):
    horizon = config.horizon if config.horizon is not None else model.horizon
    dt0 = config.fine_dt_rule.resolve(epsilon)
    n = max(1, math.ceil(horizon / dt0 - 1e-9))
    n = config.coarsen * math.ceil(n / config.coarsen)
    return n, horizon / n, horizon


def _n_workers(n_jobs):
    raw = os.environ.get("ROUGHSK_THREADS", "1")
    try:
        cap = max(1, int(raw))
    except ValueError:
        cap = 1
    return min(cap, n_jobs)


def _run_chunks(n_paths, worker):
    """Run worker(start, end) over path chunks, optionally threaded.

    Workers write into preallocated per-path slots, so output does not
    depend on scheduling order.
    """
    spans = [(s, min(s + _CHUNK, n_paths)) for s in range(0, n_paths, _CHUNK)]
    workers = _n_workers(len(spans))
    if workers <= 1:
        for s, e in spans:
            worker(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, s, e) for s, e in spans]
        for fut in futures:
            fut.result()


def _noise_block(n, d, dt, seed, eps_index, start, end):
    return np.stack(
        [
            sample_noise(n, d, dt, stream_key(seed, eps_index, k)).increments
            for k in range(start, end)
        ]
    )


def _stat(values, p):
    v = np.asarray(values, dtype=float) ** p
    n = v.size
    mean = float(np.mean(v))
    stderr = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return {"mean": mean, "stderr": stderr, "n": n}


def _annotate_failure(exc, epsilon, start):
    if isinstance(exc, BlowUp) and hasattr(exc, "batch_index"):
        k = start + exc.batch_index
        raise BlowUp(f"path failed at epsilon={epsilon}, path index {k}: {exc}") from exc
    raise exc


@dataclass
class ConvergenceReport:
    """Per-epsilon moment statistics of the coupled convergence metrics."""

    meta: dict
    per_epsilon: list
    wall_time_s: float = field(default=0.0, compare=False)

    def to_dict(self):
        return {"meta": self.meta, "per_epsilon": self.per_epsilon}

    def to_json(self):
        # wall time deliberately omitted: identical configs must yield
        # identical bytes
        return canonical_json(self.to_dict())

    def to_csv(self):
        lines = ["epsilon,metric,mean,stderr,n"]
        for rec in self.per_epsilon:
            for metric in sorted(rec["metrics"]):
                for pkey in sorted(rec["metrics"][metric]):
                    st = rec["metrics"][metric][pkey]
                    lines.append(
                        ",".join(
                            [
                                _fmt17(rec["epsilon"]),
                                f"{metric}_{pkey}",
                                _fmt17(st["mean"]),
                                _fmt17(st["stderr"]),
                                str(st["n"]),
                            ]
                        )
                    )
        return "\n".join(lines) + "\n"


def _base_meta(config, model):
    return {
        "model": model.name,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "package_version": __version__,
        "kernel_backend": kernel_backend(),
    }


_CONV_METRICS = ("rho_alpha", "holder_level1_diff", "holder_level2_diff", "sup_error", "y_sup")


def run_convergence(config, obs=None):
    """Coupled fast-slow vs limit comparison over the epsilon ladder.

    For each epsilon and path index k, simulates both systems on the same
    noise stream, lifts the fast-slow path (left-point) and the limit path
    (midpoint plus drift correction) on the coarse grid, and aggregates
    rho_alpha with its level components, the coarse sup error, the
    averaging error of ``obs`` (default: y_1^2 observable), and sup_t |Y|.
    """
    t_start = time.perf_counter()
    model = builtin_model(config.model_name)
    if obs is None:
        obs = ScalarObservableSpec(kind="yy", k=1, l=1)
    obs.validate_dim(model.dim)

    per_eps = []
    metric_means = {m: [] for m in _CONV_METRICS + ("averaging_error",)}
    for e_idx, eps in enumerate(config.epsilons):
        n, dt, horizon = _grid_for(config, model, eps)
        cols = {m: np.empty(config.n_paths) for m in _CONV_METRICS + ("averaging_error",)}

        def worker(start, end, eps=eps, e_idx=e_idx, n=n, dt=dt, cols=cols):
            from .sde import SamplePath

            dw = _noise_block(n, model.dim, dt, config.seed, e_idx, start, end)
            try:
                Xh, Yh = _simulate_fast_slow_batch(
                    model, eps, dw, dt, scheme=config.scheme
                )
                Xl = _simulate_limit_batch(model, dw, dt)
            except BlowUp as exc:
                _annotate_failure(exc, eps, start)
            for i in range(end - start):
                fine_x = SamplePath(0.0, dt, Xh[:, i, :])
                fine_y = SamplePath(0.0, dt, Yh[:, i, :])
                fine_l = SamplePath(0.0, dt, Xl[:, i, :])
                rp_eps = ito_lift(fine_x, config.coarsen)
                rp_lim = limit_lift(fine_l, model, config.coarsen)
                lvl1, lvl2 = rho_components(rp_eps, rp_lim, config.alpha)
                k = start + i
                cols["rho_alpha"][k] = lvl1 + lvl2
                cols["holder_level1_diff"][k] = lvl1
                cols["holder_level2_diff"][k] = lvl2
                cols["sup_error"][k] = float(
                    np.linalg.norm(
                        rp_eps.base.values - rp_lim.base.values, axis=1
                    ).max()
                )
                cols["y_sup"][k] = float(np.linalg.norm(Yh[:, i, :], axis=1).max())
                cols["averaging_error"][k] = averaging_error(fine_x, fine_y, obs, model)

        _run_chunks(config.n_paths, worker)

        metrics = {}
        for m in _CONV_METRICS:
            metrics[m] = {f"p{p}": _stat(cols[m], p) for p in config.p_moments}
        metrics["averaging_error"] = {"p1": _stat(cols["averaging_error"], 1)}
        for m in metric_means:
            pkey = "p1" if m == "averaging_error" else f"p{config.p_moments[0]}"
            metric_means[m].append(metrics[m][pkey]["mean"])
        per_eps.append(
            {
                "epsilon": eps,
                "n_steps": n,
                "dt": dt,
                "n_coarse": n // config.coarsen,
                "horizon": horizon,
                "metrics": metrics,
            }
        )

    meta = _base_meta(config, model)
    meta["observable"] = {"kind": obs.kind, "i": obs.i, "k": obs.k, "l": obs.l}
    meta["empirical_rates"] = _fit_rates(config.epsilons, metric_means)
    report = ConvergenceReport(meta=meta, per_epsilon=per_eps)
    report.wall_time_s = time.perf_counter() - t_start
    return report


def _fit_rates(epsilons, metric_means):
    """log-log slope of each metric's first-moment mean against epsilon."""
    rates = {}
    logs_eps = np.log(np.asarray(epsilons))
    for m, means in metric_means.items():
        arr = np.asarray(means)
        if len(arr) >= 2 and np.all(arr > 0):
            rates[m] = float(np.polyfit(logs_eps, np.log(arr), 1)[0])
        else:
            rates[m] = None
    return rates


def _dyadic_gaps(n_coarse):
    gaps = []
    g = 1
    while g <= n_coarse // 2:
        gaps.append(g)
        g *= 2
    return gaps


def _regress_loglog(hs, moments):
    x = np.log(np.asarray(hs))
    y = np.log(np.asarray(moments))
    m = x.size
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    se = float(np.sqrt(np.sum(resid**2) / max(m - 2, 1) / sxx))
    return {"slope": slope, "se": se, "ci95": 1.96 * se}


@dataclass
class HolderScalingReport:
    meta: dict
    records: list
    wall_time_s: float = field(default=0.0, compare=False)

    def to_dict(self):
        return {"meta": self.meta, "records": self.records}

    def to_json(self):
        return canonical_json(self.to_dict())

    def to_csv(self):
        lines = ["epsilon,metric,mean,stderr,n"]
        for rec in self.records:
            eps = rec["epsilon"]
            eps_txt = _fmt17(eps) if eps is not None else "nan"
            for level in ("level1", "level2"):
                fit = rec[level]
                lines.append(
                    ",".join(
                        [
                            eps_txt,
                            f"{level}_slope_p{rec['p']}",
                            _fmt17(fit["slope"]),
                            _fmt17(fit["se"]),
                            str(rec["n_samples"]),
                        ]
                    )
                )
        return "\n".join(lines) + "\n"


def run_holder_scaling(config, path_kind="fast_slow"):
    """Regress log E|X_{s,t}|^p and log E|A_{s,t}|^p against log|t-s|.

    Moments are averaged over paths and all admissible start points for
    each dyadic gap on the coarse grid.  ``path_kind`` selects the
    fast-slow path (one record per epsilon) or the limit path (single
    record, epsilon reported as null).  Raises InsufficientData when the
    coarse grid has fewer than 4 dyadic gaps or a moment degenerates to
    zero.  Records are flagged degenerate when the level-1 slope exceeds
    1.5 (smooth, non-diffusive scaling).
    """
    t_start = time.perf_counter()
    if path_kind not in ("fast_slow", "limit"):
        raise ValidationError(f"path_kind must be 'fast_slow' or 'limit', got {path_kind!r}")
    model = builtin_model(config.model_name)
    records = []
    eps_list = list(config.epsilons) if path_kind == "fast_slow" else [None]
    for e_idx, eps in enumerate(eps_list):
        grid_eps = eps if eps is not None else config.epsilons[-1]
        n, dt, horizon = _grid_for(config, model, grid_eps)
        n_coarse = n // config.coarsen
        gaps = _dyadic_gaps(n_coarse)
        if len(gaps) < 4:
            raise InsufficientData(
                f"need >= 4 dyadic gaps, coarse grid of {n_coarse} steps has {len(gaps)}"
            )
        n_chunks = math.ceil(config.n_paths / _CHUNK)
        sums1 = np.zeros((n_chunks, len(config.p_moments), len(gaps)))
        sums2 = np.zeros_like(sums1)
        counts = np.zeros((n_chunks, len(gaps)), dtype=np.int64)

        def worker(start, end, eps=eps, e_idx=e_idx, n=n, dt=dt, gaps=gaps,
                   sums1=sums1, sums2=sums2, counts=counts):
            from .sde import SamplePath

            dw = _noise_block(n, model.dim, dt, config.seed, e_idx, start, end)
            try:
                if eps is not None:
                    Xh, _ = _simulate_fast_slow_batch(
                        model, eps, dw, dt, scheme=config.scheme
                    )
                else:
                    Xh = _simulate_limit_batch(model, dw, dt)
            except BlowUp as exc:
                _annotate_failure(exc, eps, start)
            ci = start // _CHUNK
            for i in range(end - start):
                fine = SamplePath(0.0, dt, Xh[:, i, :])
                rp = ito_lift(fine, config.coarsen)
                vals = rp.base.values
                for gi, g in enumerate(gaps):
                    incr = np.linalg.norm(vals[g:] - vals[:-g], axis=1)
                    areas = rp.pair_areas(g)
                    fro = np.sqrt(np.sum(areas * areas, axis=(1, 2)))
                    counts[ci, gi] += incr.size
                    for pi, p in enumerate(config.p_moments):
                        sums1[ci, pi, gi] += float(np.sum(incr**p))
                        sums2[ci, pi, gi] += float(np.sum(fro**p))

        _run_chunks(config.n_paths, worker)

        total1 = sums1.sum(axis=0)
        total2 = sums2.sum(axis=0)
        total_counts = counts.sum(axis=0)
        hs = [g * dt * config.coarsen for g in gaps]
        for pi, p in enumerate(config.p_moments):
            mom1 = total1[pi] / total_counts
            mom2 = total2[pi] / total_counts
            if np.any(mom1 <= 0) or np.any(mom2 <= 0):
                raise InsufficientData("degenerate (zero) moments; cannot regress")
            fit1 = _regress_loglog(hs, mom1)
            fit2 = _regress_loglog(hs, mom2)
            records.append(
                {
                    "epsilon": eps,
                    "p": p,
                    "gaps_dt": list(hs),
                    "level1": {**fit1, "moments": [float(v) for v in mom1]},
                    "level2": {**fit2, "moments": [float(v) for v in mom2]},
                    "n_samples": int(total_counts.sum()),
                    "degenerate": bool(fit1["slope"] > 1.5),
                }
            )

    meta = _base_meta(config, model)
    meta["path_kind"] = path_kind
    report = HolderScalingReport(meta=meta, records=records)
    report.wall_time_s = time.perf_counter() - t_start
    return report


@dataclass
class AveragingReport:
    meta: dict
    per_epsilon: list
    decreasing: bool
    wall_time_s: float = field(default=0.0, compare=False)

    def to_dict(self):
        return {
            "meta": self.meta,
            "per_epsilon": self.per_epsilon,
            "decreasing": self.decreasing,
        }

    def to_json(self):
        return canonical_json(self.to_dict())

    def to_csv(self):
        lines = ["epsilon,metric,mean,stderr,n"]
        for rec in self.per_epsilon:
            st = rec["averaging_error"]
            lines.append(
                ",".join(
                    [
                        _fmt17(rec["epsilon"]),
                        "averaging_error_p1",
                        _fmt17(st["mean"]),
                        _fmt17(st["stderr"]),
                        str(st["n"]),
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def run_averaging_validation(config, obs):
    """Monte Carlo mean of the averaging error per epsilon, with trend flag."""
    t_start = time.perf_counter()
    model = builtin_model(config.model_name)
    obs.validate_dim(model.dim)
    per_eps = []
    means = []
    for e_idx, eps in enumerate(config.epsilons):
        n, dt, horizon = _grid_for(config, model, eps)
        errs = np.empty(config.n_paths)

        def worker(start, end, eps=eps, e_idx=e_idx, n=n, dt=dt, errs=errs):
            from .sde import SamplePath

            dw = _noise_block(n, model.dim, dt, config.seed, e_idx, start, end)
            try:
                Xh, Yh = _simulate_fast_slow_batch(
                    model, eps, dw, dt, scheme=config.scheme
                )
            except BlowUp as exc:
                _annotate_failure(exc, eps, start)
            for i in range(end - start):
                fine_x = SamplePath(0.0, dt, Xh[:, i, :])
                fine_y = SamplePath(0.0, dt, Yh[:, i, :])
                errs[start + i] = averaging_error(fine_x, fine_y, obs, model)

        _run_chunks(config.n_paths, worker)
        st = _stat(errs, 1)
        means.append(st["mean"])
        per_eps.append(
            {"epsilon": eps, "n_steps": n, "dt": dt, "averaging_error": st}
        )

    decreasing = all(b < a for a, b in zip(means, means[1:]))
    meta = _base_meta(config, model)
    meta["observable"] = {"kind": obs.kind, "i": obs.i, "k": obs.k, "l": obs.l}
    meta["empirical_rates"] = _fit_rates(config.epsilons, {"averaging_error": means})
    report = AveragingReport(meta=meta, per_epsilon=per_eps, decreasing=decreasing)
    report.wall_time_s = time.perf_counter() - t_start
    return report
