"""Named simulation sweeps over the synthetic outlier models.

Each preset returns a list of ``(name, runner)`` pairs; a runner takes
(trials, seed, workers) and returns an ExperimentReport.
"""

import numpy as np

from . import bench
from .bench import MEDIAN16, MODEL1, MODEL2, MethodSpec, SyntheticSpec
from .errors import DomainError
from .rrt import Constant, Exponential, InverseLog, InversePoly, SuperExponential, gamma_asymptotics

DEFAULT_TRIALS = {"fig1": 1000}
SWEEP_TRIALS = 100
KG_FRACTIONS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)


def _rrt(alpha):
    return MethodSpec("rrt-gard", params=(("alpha", alpha),))


def _robust_panel(sources):
    methods = [_rrt(0.1), MethodSpec("m-est"), MethodSpec("ls"), MethodSpec("ls-of")]
    for s in sources:
        methods += [MethodSpec("gard", s), MethodSpec("rmap", s), MethodSpec("ipod", s)]
    return methods


def _kg_grid(base, fractions):
    grid = []
    for f in fractions:
        k_g = int(round(f * base.n))
        if k_g < base.n - base.p:
            grid.append((f, base.with_(k_g=k_g)))
    return grid


def _sweep(name, grid, methods):
    def run(trials, seed, workers):
        rep = bench.run_monte_carlo(grid, methods, trials, seed=seed, workers=workers)
        rep.preset = name
        return rep
    return name, run


def _fig1():
    def run(trials, seed, workers):
        res = bench.validate_theorem2(trials=trials, seed=seed)
        records = []
        for (s2, a), cell in res.cells.items():
            for metric, val in cell.items():
                records.append({"x": s2, "method": f"rrt-gard(alpha={a})", "trials": trials,
                                "oracle": False, metric: val})
        for s2, rate in res.k_min_eq_kg.items():
            records.append({"x": s2, "method": "gard-trace", "trials": trials, "oracle": False,
                            "k_min_eq_kg_rate": rate,
                            "median_rr_kmin": res.median_rr_kmin[s2]})
        grid = [{"x": s2, "spec": bench.asdict(bench.FIG1_SPEC.with_(sigma2=s2))}
                for s2 in res.k_min_eq_kg]
        return bench.ExperimentReport(records, seed, trials, grid, "fig1", res.to_dict())
    return [("fig1", run)]


def _fig3():
    methods = [_rrt(0.1), _rrt(0.2), MethodSpec("best-alpha"), MethodSpec("gard", "true"),
               MethodSpec("ls-of"), MethodSpec("ls")]
    sig_grid = tuple(float(s) for s in np.logspace(-3, 1, 9))
    out = []
    for tag, model in (("a", MODEL1), ("b", MODEL2)):
        base = SyntheticSpec(n=200, p=10, k_g=20, outlier_model=model)
        out.append(_sweep(f"fig3{tag}", [(s, base.with_(sigma2=s)) for s in sig_grid], methods))
    for model in (MODEL1, MODEL2):
        base = SyntheticSpec(n=200, p=10, outlier_model=model, sigma2=1.0)
        grid = [(kg, base.with_(k_g=kg)) for kg in (10, 20, 40, 60, 80)]
        out.append(_sweep(f"fig3c-{model.lower()}", grid, methods))
    return out


def _model_panel(name, base):
    return [_sweep(name, _kg_grid(base, KG_FRACTIONS), _robust_panel(("true", "scheme1", "scheme2")))]


def _fig7a():
    base = SyntheticSpec(n=200, p=10, outlier_model=MODEL2, sigma2=MEDIAN16)
    methods = [MethodSpec("sigma", "scheme1"), MethodSpec("sigma", "scheme2")]
    return [_sweep("fig7a", _kg_grid(base, KG_FRACTIONS), methods)]


GAMMA_RULES = {
    "alpha=0.1": Constant(0.1),
    "alpha=1/log(n)": InverseLog(),
    "alpha=1/n": InversePoly(1.0),
    "alpha=exp(-0.5n)": Exponential(-0.5),
    "alpha=exp(-n^2/100)": SuperExponential(100.0),
}
GAMMA_N_GRID = (100, 200, 500, 1000, 2000, 5000, 10000)


def gamma_asymptotics_report(n_grid=GAMMA_N_GRID, d_lims=(0.0, 0.4, 0.8)):
    records = []
    for label, rule in GAMMA_RULES.items():
        for d in d_lims:
            for n, g in gamma_asymptotics(rule, d, n_grid):
                records.append({"x": n, "method": f"{label}|d_lim={d}", "trials": 1,
                                "oracle": False, "gamma_kg": g})
    return bench.ExperimentReport(records, 0, 1, [{"n_grid": list(n_grid), "d_lims": list(d_lims)}],
                                  "gamma-asymptotics")


def _gamma():
    return [("gamma-asymptotics", lambda trials, seed, workers: gamma_asymptotics_report())]


PRESETS = {
    "fig1": _fig1,
    "fig3": _fig3,
    "fig4": lambda: _model_panel("fig4", SyntheticSpec(n=200, p=10, outlier_model=MODEL1, sigma2=1.0)),
    "fig5": lambda: _model_panel("fig5", SyntheticSpec(n=200, p=10, outlier_model=MODEL2,
                                                       sigma2=MEDIAN16)),
    "fig6": lambda: _model_panel("fig6", SyntheticSpec(n=200, p=50, outlier_model=MODEL2,
                                                       sigma2=MEDIAN16)),
    "fig7a": _fig7a,
    "gamma-asymptotics": _gamma,
}


def preset_runs(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def default_trials(name):
    return DEFAULT_TRIALS.get(name, SWEEP_TRIALS)
