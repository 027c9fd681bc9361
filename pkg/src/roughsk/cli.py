"""Command line entry point.

Subcommands:
    simulate   dump one simulated path (fast-slow pair, or limit if no --eps)
    converge   run the coupled convergence experiment, write a report
    holder     run the increment-scaling regression, write a report
    average    run the averaging-error experiment, write a report
    check      verify model assumptions and solver residuals

Exit codes: 0 on success, 1 for invalid invocations or configs, 2 for
runtime failures (blow-up, singular systems, failed checks).

Reports go to --out; with no --out they land in the config's outputs
directory under a default name, and --out - streams to stdout.  Progress
notes go to stderr and are silenced by --quiet.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .averaging import poisson_residual
from .errors import RoughSKError, UnknownModel, ValidationError
from .harness import (
    ExperimentConfig,
    _grid_for,
    run_averaging_validation,
    run_convergence,
    run_holder_scaling,
)
from .linalg import covariance_J
from .models import (
    ScalarObservableSpec,
    builtin_model,
    check_assumptions,
    default_probe_cloud,
    registry_names,
)
from .sde import (
    sample_noise,
    simulate_fast_slow,
    simulate_limit,
    stream_key,
    write_path_csv,
)

__all__ = ["build_parser", "cli_main"]


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits with code 1 on malformed invocations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _info(message, quiet):
    if not quiet:
        print(f"[info] {message}", file=sys.stderr)


def _parse_eps_list(text):
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ValidationError(f"cannot parse epsilon list {text!r}")
    if not values:
        raise ValidationError("empty epsilon list")
    return values


def _load_config(args, eps_as_list=True):
    data = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValidationError(f"cannot read config file: {exc}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}")
    if getattr(args, "model", None):
        data["model_name"] = args.model
    if eps_as_list and getattr(args, "eps", None):
        data["epsilons"] = _parse_eps_list(args.eps)
    if args.seed is not None:
        data["seed"] = args.seed
    if "model_name" not in data:
        raise ValidationError("no model selected: pass --model or a config with model_name")
    return ExperimentConfig.from_dict(data)


def _write_text(text, args, default_name, outputs, quiet):
    out = args.out
    if out == "-":
        sys.stdout.write(text)
        return
    if out is None:
        os.makedirs(outputs or ".", exist_ok=True)
        out = os.path.join(outputs or ".", default_name)
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    _info(f"wrote {out}", quiet)


def _write_report(report, args, stem, outputs, quiet):
    if args.out is not None and args.out != "-" and args.out.endswith(".csv"):
        text = report.to_csv()
        default = f"{stem}.csv"
    else:
        text = report.to_json()
        default = f"{stem}.json"
    _write_text(text, args, default, outputs, quiet)
    _info(f"wall time {report.wall_time_s:.2f}s", quiet)


def _cmd_simulate(args):
    config = _load_config(args, eps_as_list=False)
    model = builtin_model(config.model_name)
    eps = args.eps
    grid_eps = eps if eps is not None else min(config.epsilons)
    if eps is not None and not 0.0 < eps <= 1.0:
        raise ValidationError(f"--eps must lie in (0, 1], got {eps}")
    n, dt, horizon = _grid_for(config, model, grid_eps)
    noise = sample_noise(n, model.dim, dt, stream_key(config.seed, 0, 0))
    if eps is not None:
        x_path, y_path = simulate_fast_slow(model, eps, noise, scheme=config.scheme)
        _info(
            f"fast-slow pair: model={model.name} eps={eps} steps={n} dt={dt:.3e}",
            args.quiet,
        )
        name = f"simulate_{model.name}.csv"
    else:
        x_path = simulate_limit(model, noise)
        y_path = None
        _info(f"limit path: model={model.name} steps={n} dt={dt:.3e}", args.quiet)
        name = f"simulate_{model.name}_limit.csv"
    import io

    buf = io.StringIO()
    write_path_csv(buf, x_path, y_path)
    _write_text(buf.getvalue(), args, name, config.outputs, args.quiet)
    return 0


def _cmd_converge(args):
    config = _load_config(args)
    _info(f"convergence run: {config.model_name}, {len(config.epsilons)} epsilons, "
          f"{config.n_paths} paths", args.quiet)
    report = run_convergence(config)
    _write_report(report, args, f"converge_{config.model_name}", config.outputs, args.quiet)
    return 0


def _cmd_holder(args):
    config = _load_config(args)
    _info(f"increment scaling run: {config.model_name}", args.quiet)
    report = run_holder_scaling(config, path_kind=args.path_kind)
    _write_report(report, args, f"holder_{config.model_name}", config.outputs, args.quiet)
    return 0


def _cmd_average(args):
    config = _load_config(args)
    model = builtin_model(config.model_name)
    obs = ScalarObservableSpec(kind="yy", k=args.k, l=args.l)
    obs.validate_dim(model.dim)
    _info(f"averaging run: {config.model_name}, observable y_{args.k} y_{args.l}",
          args.quiet)
    report = run_averaging_validation(config, obs)
    _write_report(report, args, f"average_{config.model_name}", config.outputs, args.quiet)
    return 0


_LYAPUNOV_TOL = 1e-8
_POISSON_TOL = 1e-7


def _check_one(model):
    """All per-model checks as (label, ok, detail) rows."""
    rows = []
    report = check_assumptions(model)
    for c in report.checks:
        bound = "" if c.bound is None else f" (bound {c.bound:.3e})"
        rows.append((c.name, c.passed, f"value {c.value:.3e}{bound}"))

    probes = default_probe_cloud(model.dim, n_probes=50, rng_seed=11)
    worst = 0.0
    eye = np.eye(model.dim)
    for x in probes:
        M = np.asarray(model.friction(x), dtype=float).reshape(model.dim, model.dim)
        J = covariance_J(M)
        resid = np.linalg.norm(M @ J + J @ M.T - eye) / (1.0 + np.linalg.norm(eye))
        worst = max(worst, float(resid))
    rows.append(
        ("lyapunov_residual", worst <= _LYAPUNOV_TOL, f"value {worst:.3e} (bound {_LYAPUNOV_TOL:.1e})")
    )

    xy = [
        (x, y)
        for x, y in zip(
            default_probe_cloud(model.dim, n_probes=20, rng_seed=13),
            default_probe_cloud(model.dim, n_probes=20, radius=3.0, rng_seed=17),
        )
    ]
    worst_p = 0.0
    for kind in ("yy", "xyy"):
        obs = ScalarObservableSpec(kind=kind, k=1, l=min(2, model.dim), i=1)
        worst_p = max(worst_p, poisson_residual(obs, model, xy))
    rows.append(
        ("poisson_residual", worst_p <= _POISSON_TOL, f"value {worst_p:.3e} (bound {_POISSON_TOL:.1e})")
    )
    return rows


def _cmd_check(args):
    names = [args.model] if args.model else list(registry_names())
    failed = 0
    for name in names:
        model = builtin_model(name)
        for label, ok, detail in _check_one(model):
            status = "ok" if ok else "FAIL"
            print(f"model={name} check={label} {detail} -> {status}")
            if not ok:
                failed += 1
    if failed:
        print(f"error: {failed} check(s) failed", file=sys.stderr)
        return 2
    _info(f"all checks passed for {len(names)} model(s)", args.quiet)
    return 0


def _add_common(sub, with_eps=None):
    sub.add_argument("--config", help="JSON experiment config file")
    sub.add_argument("--model", help="model name (overrides the config)")
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    sub.add_argument("--out", help="output file; - for stdout; default under the outputs dir")
    sub.add_argument("--quiet", action="store_true", help="suppress progress notes")
    if with_eps == "single":
        sub.add_argument("--eps", type=float, default=None,
                         help="fast-slow scale; omit to simulate the limit path")
    elif with_eps == "list":
        sub.add_argument("--eps", help="comma separated epsilon ladder (overrides the config)")


def build_parser():
    parser = _Parser(prog="roughsk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"roughsk {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                 parser_class=_Parser)

    p = subs.add_parser("simulate", help="dump one simulated path as CSV")
    _add_common(p, with_eps="single")
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("converge", help="coupled convergence experiment")
    _add_common(p, with_eps="list")
    p.set_defaults(func=_cmd_converge)

    p = subs.add_parser("holder", help="increment scaling regression")
    _add_common(p, with_eps="list")
    p.add_argument("--path-kind", choices=("fast_slow", "limit"), default="fast_slow")
    p.set_defaults(func=_cmd_holder)

    p = subs.add_parser("average", help="averaging error experiment")
    _add_common(p, with_eps="list")
    p.add_argument("--k", type=int, default=1, help="first fast coordinate of the observable")
    p.add_argument("--l", type=int, default=1, help="second fast coordinate of the observable")
    p.set_defaults(func=_cmd_average)

    p = subs.add_parser("check", help="assumption and residual checks")
    p.add_argument("--model", help="model name; default checks the whole registry")
    p.add_argument("--quiet", action="store_true", help="suppress progress notes")
    p.set_defaults(func=_cmd_check)

    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except (ValidationError, UnknownModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RoughSKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
