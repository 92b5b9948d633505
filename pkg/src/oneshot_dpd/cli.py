"""Command-line interface.

    oneshot-dpd fit --dataset fan2009 --gamma 0 0.5
    oneshot-dpd test-wald --dataset fan2009 --fix b1=0 --gamma 0.2
    oneshot-dpd gof --dataset fan2009-gof --theta -10.6674 4291.109 4.3174 -1202.56
    oneshot-dpd simulate --study rmse --replications 200 --degrees 0 0.4 --out rmse.csv
    oneshot-dpd curves --alpha 2 --beta 0.5 1 2 4 --out curves/

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure
(including fits that did not converge; their results are still written and
flagged).
"""
from __future__ import annotations

import argparse
import json
import math
import shlex
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .asymptotics import asymptotic_cov
from .datasets import atomic_write_text, embedded_dataset, ingest_csv
from .errors import DataError, DomainError, NumericalError, OneShotError
from .estimation import AffineConstraint, FitOptions, fit, fit_restricted
from .hypothesis import DEFAULT_LEVELS, gof_chisq, rao_test, wald_test
from .model import LinkedParams, ThetaVector, link, ll_cdf, ll_hazard, ll_pdf, ll_survival, mean_lifetime
from .montecarlo import ContaminationSpec, SimConfig, device_grid_study, level_power_study, rmse_study

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULT_GAMMAS = tuple(round(0.1 * i, 1) for i in range(11))
NORMAL_USE_KELVIN = 298.0
SIM_THETA = (1.0, -0.5, 0.8, 0.4)


class UsageError(OneShotError):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# --- output -----------------------------------------------------------------

def _plain(obj):
    """Convert numpy values and non-finite floats into JSON-safe Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def manifest(args: argparse.Namespace) -> dict:
    options = {k: v for k, v in vars(args).items() if k not in ("handler", "subparsers")}
    return _plain({
        "command": args.command,
        "source": args.input or args.dataset,
        "gammas": list(getattr(args, "gamma", None) or []),
        "options": options,
        "version": tool_version(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })


def _csv_text(header: list[str], rows: list[list], meta: dict) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return repr(float(v)) if math.isfinite(v) else ""
        return str(v)

    lines = ["# manifest " + json.dumps(meta, sort_keys=True), ",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def emit(args, payload: dict, table: tuple[list[str], list[list]] | None = None) -> None:
    """Write ``payload`` (JSON) or ``table`` (CSV) with the run manifest embedded."""
    meta = manifest(args)
    if args.format == "csv" and table is not None:
        text = _csv_text(table[0], table[1], meta)
    else:
        text = json.dumps(_plain({"manifest": meta, **payload}), indent=2, allow_nan=False) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


# --- argument helpers -------------------------------------------------------

def _load_plan(args):
    if args.input:
        return ingest_csv(args.input)
    return embedded_dataset(args.dataset)


def _parse_fix(items, stress_dim: int) -> AffineConstraint:
    values = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--fix expects name=value, got {item!r}")
        try:
            values[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--fix value for {name!r} is not a number: {value!r}") from None
    if not values:
        raise UsageError("at least one --fix name=value restriction is required")
    return AffineConstraint.fix(values, stress_dim)


def _fit_options(args) -> FitOptions:
    return FitOptions(
        max_iterations=args.max_iterations,
        grad_tolerance=args.grad_tolerance,
        multistart_count=args.multistart,
    )


def _theta_arg(values, n_params: int) -> ThetaVector | None:
    if values is None:
        return None
    if len(values) != n_params:
        raise UsageError(f"--theta needs {n_params} values, got {len(values)}")
    return ThetaVector.from_flat(values)


def _is_fan(args) -> bool:
    return not args.input and args.dataset.startswith("fan2009")


def _stress_points(args, plan) -> list[tuple[float, ...]]:
    points = list(dict.fromkeys(tuple(float(v) for v in row) for row in plan.design[:, 1:]))
    extra = args.at_stress
    if extra is None and _is_fan(args):
        extra = [repr(1.0 / NORMAL_USE_KELVIN)]
    for token in extra or []:
        try:
            point = tuple(float(v) for v in token.split(","))
        except ValueError:
            raise UsageError(f"--at-stress expects comma-separated numbers, got {token!r}") from None
        if len(point) != plan.stress_dim:
            raise UsageError(f"--at-stress point {token!r} needs {plan.stress_dim} value(s)")
        if point not in points:
            points.append(point)
    return points


def _lifetime(theta, point) -> float | None:
    try:
        return mean_lifetime(link(theta, (1.0,) + tuple(point)))
    except DomainError:
        return None


# --- commands ---------------------------------------------------------------

def cmd_fit(args) -> int:
    plan = _load_plan(args)
    opts = _fit_options(args)
    points = _stress_points(args, plan)
    names = ThetaVector.from_flat(np.zeros(plan.n_params)).names()
    results, rows, status = [], [], EXIT_OK
    for g in args.gamma:
        est = fit(plan, g, opts)
        try:
            se = asymptotic_cov(est.theta, plan, g).std_errors
            se_note = None
        except NumericalError as exc:
            se, se_note, status = None, str(exc), EXIT_NUMERICAL
        if not est.converged:
            status = EXIT_NUMERICAL
        lifetimes = [_lifetime(est.theta, p) for p in points]
        results.append({
            "gamma": g,
            "theta": dict(zip(names, est.theta)),
            "std_errors": None if se is None else dict(zip(names, se)),
            "std_error_note": se_note,
            "objective": est.objective_value,
            "grad_norm": est.grad_norm,
            "converged": est.converged,
            "iterations": est.iterations,
            "rank_deficient": est.rank_deficient,
            "warnings": list(est.warnings),
            "mean_lifetimes": [{"stress": list(p), "mean_lifetime": m} for p, m in zip(points, lifetimes)],
        })
        rows.append([g, *est.theta, *(se if se is not None else [None] * len(names)), *lifetimes,
                     est.objective_value, est.grad_norm, est.converged])
    header = (["gamma"] + names + [f"se_{n}" for n in names]
              + ["mean_life_" + ":".join(repr(v) for v in p) for p in points]
              + ["objective", "grad_norm", "converged"])
    emit(args, {"stress_points": points, "fits": results}, (header, rows))
    return status


def _tests_common(args, kind: str) -> int:
    plan = _load_plan(args)
    constraint = _parse_fix(args.fix, plan.stress_dim)
    opts = _fit_options(args)
    out, rows, status = [], [], EXIT_OK
    for g in args.gamma:
        if kind == "wald":
            est = fit(plan, g, opts)
            outcome = wald_test(est, plan, constraint)
        else:
            est = fit_restricted(plan, g, constraint, opts)
            outcome = rao_test(est, plan, g, constraint)
        if not est.converged:
            status = EXIT_NUMERICAL
        record = outcome.as_dict() | {
            "estimate": est.theta, "converged": est.converged, "iterations": est.iterations,
        }
        out.append(record)
        rows.append([kind, g, outcome.statistic, outcome.dof, outcome.p_value,
                     *(outcome.reject_at[a] for a in sorted(outcome.reject_at)), est.converged])
    header = (["test", "gamma", "statistic", "dof", "p_value"]
              + [f"reject_{a}" for a in sorted(DEFAULT_LEVELS)] + ["converged"])
    emit(args, {"hypothesis": {"fix": args.fix}, "results": out}, (header, rows))
    return status


def cmd_test_wald(args) -> int:
    return _tests_common(args, "wald")


def cmd_test_rao(args) -> int:
    return _tests_common(args, "rao")


def cmd_gof(args) -> int:
    plan = _load_plan(args)
    theta = _theta_arg(args.theta, plan.n_params)
    out, rows, status = [], [], EXIT_OK
    if theta is not None:
        runs = [(None, theta, True)]
    else:
        runs = []
        for g in args.gamma:
            est = fit(plan, g, _fit_options(args))
            runs.append((g, est.theta_hat, est.converged))
    for g, th, converged in runs:
        outcome = gof_chisq(th, plan)
        if not converged:
            status = EXIT_NUMERICAL
        out.append(outcome.as_dict() | {"gamma": g, "theta": th.flat, "converged": converged})
        rows.append([g, outcome.statistic, outcome.dof, outcome.p_value, converged])
    emit(args, {"results": out}, (["gamma", "statistic", "dof", "p_value", "converged"], rows))
    return status


def cmd_simulate(args) -> int:
    design = _load_plan(args).without_failures()
    theta = _theta_arg(args.theta, design.n_params) or ThetaVector.from_flat(SIM_THETA)
    spec = ContaminationSpec(target_component=args.contaminate_component,
                             target_conditions=frozenset(args.contaminate_conditions))
    cfg = SimConfig(design, theta, tuple(args.gamma), args.replications, args.seed, spec,
                    FitOptions(initial_theta=theta, multistart_count=0))
    if args.study == "rmse":
        result = rmse_study(cfg, args.degrees)
    else:
        constraint = _parse_fix(args.fix or ["b0=0.8"], design.stress_dim)
        if args.study == "level":
            result = level_power_study(cfg, constraint, None, args.alt_value, degrees=args.degrees,
                                       tests=args.tests, alpha=args.alpha)
        else:
            if args.alt_value is None:
                raise UsageError("--study devices needs --alt-value")
            result = device_grid_study(cfg, constraint, args.alt_value, args.devices_grid, alpha=args.alpha)
    header = list(result.rows[0]) if result.rows else []
    emit(args, {"rows": result.rows}, (header, [list(r.values()) for r in result.rows]))
    excluded = any(r["excluded"] == r["replications"] for r in result.rows)
    return EXIT_NUMERICAL if excluded else EXIT_OK


def cmd_curves(args) -> int:
    if args.t_max <= 0 or args.points < 2:
        raise UsageError("--t-max must be positive and --points at least 2")
    t = np.linspace(args.t_max / args.points, args.t_max, args.points)
    out_dir = Path(args.out) if args.out else None
    meta = manifest(args)
    files = []
    for b in args.beta:
        p = LinkedParams(args.alpha, b)
        cols = (t, ll_pdf(t, p), ll_cdf(t, p), ll_survival(t, p), ll_hazard(t, p))
        rows = [list(r) for r in zip(*cols)]
        text = _csv_text(["t", "pdf", "cdf", "survival", "hazard"], rows, meta | {"beta": b})
        if out_dir is None:
            sys.stdout.write(text)
        else:
            path = out_dir / f"curves_alpha{args.alpha:g}_beta{b:g}.csv"
            atomic_write_text(path, text)
            files.append(str(path))
    if out_dir is not None:
        sys.stdout.write("\n".join(files) + "\n")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _common(defaults_gamma) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--gamma", type=float, nargs="+", default=list(defaults_gamma),
                   help="tuning parameter(s), >= 0; 0 gives maximum likelihood")
    p.add_argument("--seed", type=int, default=20240521)
    p.add_argument("--out", help="output file (directory for curves); stdout if omitted")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--dataset", default="fan2009", help="embedded dataset: fan2009, fan2009-gof, sim-design")
    p.add_argument("--input", help="CSV file with header tau,x1,...,xJ,K,n (overrides --dataset)")
    p.add_argument("--config", help="flat key = value file mirroring these flags; flags win")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--grad-tolerance", type=float, default=1e-8)
    p.add_argument("--multistart", type=int, default=4)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oneshot-dpd", description="Robust estimation and testing "
                                     "for one-shot device accelerated life tests.")
    parser.add_argument("--version", action="version", version=tool_version())
    sub = parser.add_subparsers(dest="command", required=True)
    parser.set_defaults(subparsers=sub.choices)

    p = sub.add_parser("fit", parents=[_common(DEFAULT_GAMMAS)], help="fit the model for each gamma")
    p.add_argument("--at-stress", nargs="+", metavar="X1[,X2...]",
                   help="extra stress points for mean lifetimes (default adds x = 1/298 for fan2009)")
    p.set_defaults(handler=cmd_fit)

    for name, handler in (("test-wald", cmd_test_wald), ("test-rao", cmd_test_rao)):
        p = sub.add_parser(name, parents=[_common((0.0,))], help=f"{name[5:].title()}-type test")
        p.add_argument("--fix", nargs="+", metavar="NAME=VALUE", help="restrictions, e.g. b0=0.8")
        p.set_defaults(handler=handler)

    p = sub.add_parser("gof", parents=[_common((0.0,))], help="chi-square goodness of fit")
    p.add_argument("--theta", type=float, nargs="+", help="evaluate at this theta instead of fitting")
    p.set_defaults(handler=cmd_gof)

    p = sub.add_parser("simulate", parents=[_common((0.0, 0.2, 0.4, 0.6, 0.8, 1.0))],
                       help="Monte Carlo RMSE / level / power studies")
    p.add_argument("--study", choices=("rmse", "level", "devices"), default="rmse")
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--degrees", type=float, nargs="+", default=[0.0])
    p.add_argument("--theta", type=float, nargs="+", help="generating theta (default 1 -0.5 0.8 0.4)")
    p.add_argument("--fix", nargs="+", metavar="NAME=VALUE", help="null hypothesis (default b0=0.8)")
    p.add_argument("--alt-value", type=float, help="generating value of the fixed component for power")
    p.add_argument("--tests", nargs="+", choices=("wald", "rao"), default=["wald"])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--contaminate-component", type=int, default=2)
    p.add_argument("--contaminate-conditions", type=int, nargs="+", default=[0])
    p.add_argument("--devices-grid", type=int, nargs="+", default=[50, 100, 200, 400])
    p.set_defaults(handler=cmd_simulate, format="csv", dataset="sim-design")

    p = sub.add_parser("curves", parents=[_common(())], help="log-logistic pdf/cdf/survival/hazard curves")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=200)
    p.set_defaults(handler=cmd_curves)
    return parser


def read_config(path: str) -> list[str]:
    """Turn ``key = value`` lines into argument tokens (``#`` starts a comment)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    tokens = []
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"config line {number}: expected key = value")
        tokens.append("--" + key.strip().replace("_", "-"))
        tokens.extend(shlex.split(value))
    return tokens


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = args.subparsers[args.command]
        from_file = sub.parse_args(read_config(args.config))
        explicit = sub.parse_args(argv[argv.index(args.command) + 1:],
                                  namespace=argparse.Namespace(**{k: _UNSET for k in vars(args)}))
        for key, value in vars(explicit).items():
            if value is _UNSET and key in vars(from_file):
                setattr(args, key, getattr(from_file, key))
    _check_common(args)
    return args


class _Unset:
    def __repr__(self):
        return "<unset>"


_UNSET = _Unset()


def _check_common(args) -> None:
    if args.command != "curves" and not args.gamma:
        raise UsageError("--gamma needs at least one value")
    for g in args.gamma or []:
        if not (math.isfinite(g) and g >= 0):
            raise UsageError(f"--gamma values must be >= 0, got {g}")
    if args.command != "curves" and args.out and Path(args.out).is_dir():
        raise UsageError(f"--out {args.out} is a directory")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        code = args.handler(args)
        if code == EXIT_NUMERICAL:
            print("numerical failure: some results did not converge or lack standard errors; "
                  "see the flagged entries in the output", file=sys.stderr)
        return code
    except SystemExit as exc:  # argparse
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
