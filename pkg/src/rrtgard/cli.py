"""Command-line entry point: ``rrtgard fit | detect-outliers | simulate | validate``.

Observation numbers printed or written by these commands are 1-based;
everything inside the package is 0-based.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines
from .bench import SCHEMA_VERSION, boxplot_outliers
from .datasets import BUILTIN, DatasetFile, DatasetParseError, load_builtin, load_dataset, read_table
from .errors import DomainError
from .gard import FixedSparsity, KnownVariance, gard_estimate
from .rrt import RrtConfig, rrt_gard

METHODS = ("rrt-gard", "gard", "ls", "lad", "m-est", "rmap", "ipod")
SIGMA_METHODS = ("gard", "rmap", "ipod")


class UsageError(Exception):
    """Bad combination of options; reported with exit status 2."""


# -- estimation shared by the commands and the acceptance suite ---------------

def resolve_sigma(problem, sigma=None, sigma_scheme=None, sigma_scale=1.0):
    """Return (sigma, source) from an explicit value or an estimation scheme."""
    if sigma is not None:
        if sigma <= 0:
            raise UsageError("--sigma must be positive")
        return float(sigma), "given"
    if sigma_scheme is None:
        return None, "none"
    if int(sigma_scheme) == 1:
        est = baselines.sigma_scheme1(problem)
    elif int(sigma_scheme) == 2:
        est = baselines.sigma_scheme2(problem)
    else:
        raise UsageError("--sigma-scheme must be 1 or 2")
    return est.sigma_hat * sigma_scale, f"scheme{int(sigma_scheme)}"


def fit_problem(problem, method="rrt-gard", alpha=0.1, sigma=None, sigma_scheme=None,
                gamma=None, reproject=True, k_user=None):
    """Run one estimator on ``problem`` and return its RobustEstimate."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "rrt-gard":
        return rrt_gard(problem, RrtConfig(alpha))
    if method == "ls":
        return baselines.ls_fit(problem)
    if method == "lad":
        return baselines.lad_fit(problem)
    if method == "m-est":
        return baselines.m_estimate(problem)
    if method == "gard" and k_user is not None:
        return gard_estimate(problem, FixedSparsity(int(k_user)))
    s, source = resolve_sigma(problem, sigma, sigma_scheme)
    if s is None:
        raise UsageError(f"method {method!r} needs --sigma or --sigma-scheme")
    if method == "gard":
        est = gard_estimate(problem, KnownVariance(s * s))
        est.method["sigma_source"] = source
        return est
    if method == "rmap":
        try:
            est = baselines.rmap_fit(problem, s, sigma_source=source)
        except baselines.ConvergenceError as exc:
            est = exc.best
            est.method.setdefault("flags", []).append("not_converged")
    else:
        est = baselines.ipod_fit(problem, s, sigma_source=source)
    if reproject:
        g = baselines.REPROJECT_GAMMA[method] if gamma is None else float(gamma)
        est = baselines.reproject(problem, est, g, s)
    return est


def detect_outliers(problem, **fit_kwargs):
    """Fit, then box-plot the robust residual y - X beta_hat.

    Returns (estimate, flagged 0-based indices, fences, robust residual).
    """
    est = fit_problem(problem, **fit_kwargs)
    r = est.robust_residual
    flagged, fences = boxplot_outliers(r)
    return est, flagged, fences, r


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def fit_result(est, dataset):
    r = est.residual
    rr = est.robust_residual
    return {
        "schema_version": SCHEMA_VERSION,
        "dataset": dataset.source.path,
        "n": dataset.problem.n,
        "features": dataset.feature_names,
        "beta_hat": [float(v) for v in est.beta_hat],
        "support": [int(i) + 1 for i in est.support],
        "support_labels": [dataset.labels[i] for i in est.support],
        "residual": {
            "norm": float(np.linalg.norm(r)),
            "max_abs": float(np.max(np.abs(r))),
            "robust_norm": float(np.linalg.norm(rr)),
        },
        "method": _jsonable(est.method),
    }


# -- configuration ----------------------------------------------------------------

COMMON_DEFAULTS = {
    "method": "rrt-gard",
    "alpha": 0.1,
    "sigma": None,
    "sigma_scheme": None,
    "gamma": None,
    "reproject": True,
    "k_user": None,
    "intercept": None,
    "response": None,
    "features": None,
    "out": None,
}
SIMULATE_DEFAULTS = {"preset": None, "trials": None, "seed": 0, "workers": 1, "out_dir": "results"}
VALIDATE_DEFAULTS = {"seed": 0, "trials_scale": 1.0, "out_dir": "results", "skip_slow": False}
DEFAULTS = {
    "fit": COMMON_DEFAULTS,
    "detect-outliers": COMMON_DEFAULTS,
    "simulate": SIMULATE_DEFAULTS,
    "validate": VALIDATE_DEFAULTS,
}


def load_config(path, command):
    """Read a JSON object of parameters for ``command``; unknown keys are errors."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS[command]))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    return data


def resolve_options(args, command):
    """Defaults, then the config file, then explicitly given flags."""
    opts = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        opts.update(load_config(args.config, command))
    for key in DEFAULTS[command]:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


# -- commands -----------------------------------------------------------------------

def _load(dataset, opts):
    if dataset in BUILTIN:
        return load_builtin(dataset, intercept=opts["intercept"])
    header, _ = read_table(dataset)
    response = opts["response"] or header[-1]
    features = opts["features"] or [h for h in header if h != response]
    if isinstance(features, str):
        features = [f.strip() for f in features.split(",") if f.strip()]
    intercept = True if opts["intercept"] is None else bool(opts["intercept"])
    return load_dataset(DatasetFile(dataset, response, tuple(features), intercept))


def _fit_kwargs(opts):
    return {k: opts[k] for k in ("method", "alpha", "sigma", "sigma_scheme", "gamma",
                                 "reproject", "k_user")}


def _emit(obj, out):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_fit(args):
    opts = resolve_options(args, "fit")
    ds = _load(args.dataset, opts)
    est = fit_problem(ds.problem, **_fit_kwargs(opts))
    _emit(fit_result(est, ds), opts["out"])
    return 0


def cmd_detect_outliers(args):
    opts = resolve_options(args, "detect-outliers")
    ds = _load(args.dataset, opts)
    est, flagged, fences, r = detect_outliers(ds.problem, **_fit_kwargs(opts))
    result = fit_result(est, ds)
    result.update({
        "flagged": [i + 1 for i in flagged],
        "flagged_labels": [ds.labels[i] for i in flagged],
        "fences": list(fences),
        "robust_residuals": [float(v) for v in r],
    })
    _emit(result, opts["out"])
    return 0


def cmd_simulate(args):
    from .presets import default_trials, preset_runs

    opts = resolve_options(args, "simulate")
    if not opts["preset"]:
        raise UsageError("simulate needs --preset")
    try:
        runs = preset_runs(opts["preset"])
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    trials = int(opts["trials"] or default_trials(opts["preset"]))
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, run in runs:
        rep = run(trials, int(opts["seed"]), int(opts["workers"]))
        rep.write_json(out_dir / f"{name}.json")
        rep.write_curves_csv(out_dir / f"{name}.csv")
        print(f"== {name}  (trials={rep.trials}, seed={rep.seed}) -> {out_dir / name}.{{json,csv}}")
        print(summary_table(rep))
    return 0


def summary_table(rep):
    skip = {"x", "method", "trials", "oracle"}
    metrics = []
    for r in rep.records:
        for k, v in r.items():
            if k not in skip and v is not None and k not in metrics:
                metrics.append(k)
    metrics = metrics[:4]
    rows = [["x", "method"] + metrics]
    for r in rep.records:
        rows.append([f"{r['x']:g}", r["method"]] +
                    ["" if r.get(m) is None else f"{r[m]:.4g}" for m in metrics])
    widths = [max(len(row[j]) for row in rows) for j in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)


def cmd_validate(args):
    from .acceptance import run_all

    opts = resolve_options(args, "validate")
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_all(seed=int(opts["seed"]), trials_scale=float(opts["trials_scale"]),
                      skip_slow=bool(opts["skip_slow"]))
    for r in results:
        print(r.line())
    verdict = {
        "schema_version": SCHEMA_VERSION,
        "seed": int(opts["seed"]),
        "trials_scale": float(opts["trials_scale"]),
        "passed": all(r.passed for r in results),
        "criteria": [r.to_dict() for r in results],
    }
    path = out_dir / "verdict.json"
    path.write_text(json.dumps(_jsonable(verdict), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    print(f"verdict written to {path}")
    return 0 if verdict["passed"] else 1


# -- argument parsing ----------------------------------------------------------------

def _dataset_args(p):
    p.add_argument("dataset", help=f"CSV path or one of: {', '.join(sorted(BUILTIN))}")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha", type=float, help="RRT-GARD alpha (default 0.1)")
    p.add_argument("--sigma", type=float, help="known inlier noise standard deviation")
    p.add_argument("--sigma-scheme", type=int, choices=(1, 2),
                   help="estimate sigma from LAD (1) or M-estimate (2) residuals")
    p.add_argument("--gamma", type=float, help="re-projection threshold multiplier")
    p.add_argument("--no-reproject", dest="reproject", action="store_const", const=False,
                   help="skip re-projection after rmap/ipod")
    p.add_argument("--k-user", type=int, help="GARD with a fixed number of outliers")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--intercept", dest="intercept", action="store_const", const=True,
                   help="prepend a column of ones")
    g.add_argument("--no-intercept", dest="intercept", action="store_const", const=False)
    p.add_argument("--response", help="response column (CSV paths; default last column)")
    p.add_argument("--features", help="comma-separated feature columns (default: the rest)")
    p.add_argument("--config", help="JSON file of options; flags override it")
    p.add_argument("--out", help="also write the JSON result here")


def build_parser():
    parser = argparse.ArgumentParser(prog="rrtgard", description=(
        "Robust linear regression with greedy outlier pursuit and residual ratio thresholds."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a robust regression and print JSON")
    _dataset_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect-outliers", help="fit, then flag box-plot outliers (1-based)")
    _dataset_args(p)
    p.set_defaults(func=cmd_detect_outliers)

    p = sub.add_parser("simulate", help="run a named Monte Carlo sweep")
    p.add_argument("--preset", help="fig1, fig3, fig4, fig5, fig6, fig7a or gamma-asymptotics")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the acceptance criteria and write verdict.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials-scale", type=float,
                   help="multiply every trial count (tolerances widen accordingly)")
    p.add_argument("--skip-slow", action="store_const", const=True)
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except DatasetParseError as exc:
        print(f"{parser.prog}: parse error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, FileNotFoundError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
