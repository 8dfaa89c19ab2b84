"""Synthetic problems, Monte Carlo sweeps and theorem-level diagnostics.

Every trial draws its own generator from ``SeedSequence(master, spawn_key=
(config, trial))``, so a report depends only on the grid, the trial count
and the master seed, never on how trials are spread over workers.
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from . import baselines
from .errors import DomainError
from .gard import FullTrace, KnownVariance, epsilon_sigma, gard_estimate, gard_run
from .linalg import RegressionProblem, Truth, delta_subset, joint_ls, qr_factor
from .rrt import RrtConfig, rrt_from_trace, rrt_threshold_table

SCHEMA_VERSION = "1"

MODEL1 = "Model1"
MODEL2 = "Model2"
MEDIAN16 = "Median16"
NORMALIZED = "GaussianNormalizedColumns"
UNIT_VARIANCE = "GaussianUnitVariance"
SCALED = "GaussianScaled"  # entries N(0, 1/n)
DESIGNS = (NORMALIZED, UNIT_VARIANCE, SCALED)
BEST_ALPHA_GRID = tuple(np.logspace(-6, 1, 100))


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one random robust-regression problem.

    ``sigma2`` is a variance or the string ``"Median16"`` (sigma set to
    median|X beta| / 16 after X and beta are drawn).  ``outlier_sign``
    is ``"random"`` (equiprobable signs) or ``"positive"``; it only
    affects Model 1.
    """

    n: int = 200
    p: int = 10
    k_g: int = 10
    outlier_model: str = MODEL1
    sigma2: Union[float, str] = 1.0
    design: str = NORMALIZED
    outlier_sign: str = "random"
    outlier_magnitude: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.n > self.p >= 1:
            raise DomainError(f"need n > p >= 1, got n={self.n}, p={self.p}")
        if not 0 <= self.k_g < self.n - self.p:
            raise DomainError(f"k_g must be in [0, n-p), got k_g={self.k_g}")
        if self.outlier_model not in (MODEL1, MODEL2):
            raise DomainError(f"unknown outlier model {self.outlier_model!r}")
        if self.design not in DESIGNS:
            raise DomainError(f"unknown design {self.design!r}")
        if self.outlier_sign not in ("random", "positive"):
            raise DomainError(f"unknown outlier sign rule {self.outlier_sign!r}")
        if isinstance(self.sigma2, str):
            if self.sigma2 != MEDIAN16:
                raise DomainError(f"unknown sigma rule {self.sigma2!r}")
        elif not self.sigma2 >= 0:
            raise DomainError(f"sigma2 must be non-negative, got {self.sigma2}")

    def with_(self, **kw):
        return SyntheticSpec(**{**asdict(self), **kw})


def _design(spec, rng):
    n, p = spec.n, spec.p
    if spec.design == SCALED:
        return rng.normal(0.0, 1.0 / math.sqrt(n), size=(n, p))
    X = rng.normal(size=(n, p))
    if spec.design == NORMALIZED:
        X /= np.linalg.norm(X, axis=0)
    return X


def gen_synthetic(spec, rng=None):
    """Draw y = X beta + w + g_out according to ``spec``.

    Draw order is X, beta, the outlier support, outlier values, then w.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    X = _design(spec, rng)
    beta = rng.choice([-1.0, 1.0], size=spec.p)
    if spec.sigma2 == MEDIAN16:
        sigma = float(np.median(np.abs(X @ beta))) / 16.0
    else:
        sigma = math.sqrt(spec.sigma2)
    support = np.sort(rng.choice(spec.n, size=spec.k_g, replace=False))
    if spec.outlier_model == MODEL1:
        if spec.outlier_sign == "positive":
            vals = np.full(spec.k_g, spec.outlier_magnitude)
        else:
            vals = spec.outlier_magnitude * rng.choice([-1.0, 1.0], size=spec.k_g)
    else:
        signs = rng.choice([-1.0, 1.0], size=spec.k_g)
        vals = signs * 12.0 * sigma + 4.0 * sigma * rng.normal(size=spec.k_g)
    g = np.zeros(spec.n)
    g[support] = vals
    w = sigma * rng.normal(size=spec.n)
    y = X @ beta + w + g
    truth = Truth(beta, tuple(int(i) for i in support), g, sigma * sigma, w)
    return RegressionProblem(y, X, truth)


# -- methods ------------------------------------------------------------------

SIGMA_SOURCES = ("true", "scheme1", "scheme2", "none")


@dataclass(frozen=True)
class MethodSpec:
    """One curve in a sweep.

    ``name`` is one of ls, ls-of, lad, m-est, rrt-gard, best-alpha, gard,
    rmap, ipod, sigma.  ``params`` is a tuple of (key, value) pairs so the
    spec stays hashable.  ls-of and best-alpha are oracles and are the
    only methods handed the truth block.
    """

    name: str
    sigma_source: str = "none"
    params: tuple = ()

    def __post_init__(self):
        if self.name not in _RUNNERS:
            raise DomainError(f"unknown method {self.name!r}")
        if self.sigma_source not in SIGMA_SOURCES:
            raise DomainError(f"unknown sigma source {self.sigma_source!r}")
        if self.name in _NEEDS_SIGMA and self.sigma_source == "none":
            raise DomainError(f"method {self.name!r} needs a sigma source")

    @property
    def oracle(self):
        return self.name in ("ls-of", "best-alpha")

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    @property
    def label(self):
        s = self.name
        if self.params:
            s += "(" + ",".join(f"{k}={v}" for k, v in self.params) + ")"
        if self.sigma_source != "none":
            s += f"[{self.sigma_source}]"
        return s


def _support_metrics(support, truth):
    est, true = set(support), truth.support_set
    return {
        "support_exact": float(est == true),
        "false_discovery": float(bool(est - true)),
        "missed": float(bool(true - est)),
    }


def _fit_metrics(est, truth):
    out = {"sq_err": float(np.sum((est.beta_hat - truth.beta) ** 2))}
    out.update(_support_metrics(est.support, truth))
    return out


class _TrialContext:
    """Per-trial cache of the expensive shared pieces (sigma estimates, traces)."""

    def __init__(self, problem):
        self.problem = problem
        self.blind = problem.blind()
        self._cache = {}

    def get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def sigma(self, source):
        truth = self.problem.truth
        if source == "true":
            return math.sqrt(truth.sigma2)
        if source == "scheme1":
            lad = self.get("lad", lambda: baselines.lad_fit(self.blind))
            return self.get("s1", lambda: baselines.sigma_scheme1(self.blind, lad)).sigma_hat
        if source == "scheme2":
            mest = self.get("m-est", lambda: baselines.m_estimate(self.blind))
            return self.get("s2", lambda: baselines.sigma_scheme2(self.blind, fit=mest)).sigma_hat
        raise DomainError(f"method needs sigma but sigma_source={source!r}")


def _run_ls(ctx, m):
    return _fit_metrics(ctx.get("ls", lambda: baselines.ls_fit(ctx.blind)), ctx.problem.truth)


def _run_ls_of(ctx, m):
    # LS on the same draw with the outliers removed from y (y = X beta + w)
    truth = ctx.problem.truth
    beta, *_ = np.linalg.lstsq(ctx.problem.X, ctx.problem.y - truth.g_out, rcond=None)
    return {"sq_err": float(np.sum((beta - truth.beta) ** 2))}


def _run_lad(ctx, m):
    return _fit_metrics(ctx.get("lad", lambda: baselines.lad_fit(ctx.blind)), ctx.problem.truth)


def _run_mest(ctx, m):
    return _fit_metrics(ctx.get("m-est", lambda: baselines.m_estimate(ctx.blind)),
                        ctx.problem.truth)


def _rrt_trace(ctx):
    n, p = ctx.problem.n, ctx.problem.p
    return ctx.get("trace", lambda: gard_run(ctx.blind, FullTrace(n - p - 1)))


def _run_rrt(ctx, m):
    alpha = float(m.param("alpha", 0.1))
    trace = _rrt_trace(ctx)
    est = rrt_from_trace(ctx.blind, trace, [alpha])[0]
    out = _fit_metrics(est, ctx.problem.truth)
    k_g = len(ctx.problem.truth.outlier_support)
    k_min = trace.k_min(ctx.problem.truth.outlier_support)
    table = rrt_threshold_table(ctx.problem.n, ctx.problem.p, RrtConfig(alpha))
    out["k_min_eq_kg"] = float(k_min == k_g)
    out["rr_bound_violation"] = float(_violates(trace, table, k_min))
    out["alpha_fallback"] = float(est.method["fallback_engaged"])
    return out


def _run_best_alpha(ctx, m):
    alphas = [float(a) for a in m.param("alphas", BEST_ALPHA_GRID)]
    ests = rrt_from_trace(ctx.blind, _rrt_trace(ctx), alphas)
    truth = ctx.problem.truth
    errs = [float(np.sum((e.beta_hat - truth.beta) ** 2)) for e in ests]
    j = int(np.argmin(errs))
    out = _fit_metrics(ests[j], truth)
    out["best_alpha"] = alphas[j]
    return out


def _run_gard(ctx, m):
    sigma = ctx.sigma(m.sigma_source) * float(m.param("scale", 1.0))
    est = gard_estimate(ctx.blind, KnownVariance(sigma * sigma))
    return _fit_metrics(est, ctx.problem.truth)


def _maybe_reproject(ctx, m, est, sigma):
    if m.param("reproject", True):
        gamma = float(m.param("gamma", baselines.REPROJECT_GAMMA[m.name]))
        est = baselines.reproject(ctx.blind, est, gamma, sigma)
    return est


def _run_rmap(ctx, m):
    sigma = ctx.sigma(m.sigma_source) * float(m.param("scale", 1.0))
    try:
        est = baselines.rmap_fit(ctx.blind, sigma, sigma_source=m.sigma_source)
    except baselines.ConvergenceError as exc:
        est = exc.best
    return _fit_metrics(_maybe_reproject(ctx, m, est, sigma), ctx.problem.truth)


def _run_ipod(ctx, m):
    sigma = ctx.sigma(m.sigma_source) * float(m.param("scale", 1.0))
    est = baselines.ipod_fit(ctx.blind, sigma, sigma_source=m.sigma_source)
    return _fit_metrics(_maybe_reproject(ctx, m, est, sigma), ctx.problem.truth)


def _run_sigma(ctx, m):
    true = math.sqrt(ctx.problem.truth.sigma2)
    est = ctx.sigma(m.sigma_source)
    return {"sigma_ratio": est / true, "sigma_rel_error": abs(est - true) / true}


_RUNNERS = {
    "ls": _run_ls,
    "ls-of": _run_ls_of,
    "lad": _run_lad,
    "m-est": _run_mest,
    "rrt-gard": _run_rrt,
    "best-alpha": _run_best_alpha,
    "gard": _run_gard,
    "rmap": _run_rmap,
    "ipod": _run_ipod,
    "sigma": _run_sigma,
}
_NEEDS_SIGMA = ("gard", "rmap", "ipod", "sigma")


def _violates(trace, table, k_min, strict=True):
    """Whether RR(k) falls below Gamma(k) for some real step k > k_min."""
    if math.isinf(k_min):
        return False
    ks = np.arange(int(k_min) + 1, trace.effective_k_max + 1)
    if ks.size == 0:
        return False
    rr = trace.residual_ratios[ks - 1]
    gam = table.gamma[ks - 1]
    return bool(np.any(rr < gam) if strict else np.any(rr <= gam))


def _last_crossing(trace, table, strict=True):
    rr = trace.residual_ratios[: trace.effective_k_max]
    gam = table.gamma[: trace.effective_k_max]
    hits = np.flatnonzero(rr < gam if strict else rr <= gam)
    return int(hits[-1]) + 1 if hits.size else 0


# -- the Monte Carlo runner -------------------------------------------------------

def trial_rng(master_seed, config_index, trial):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(config_index), int(trial)))
    return np.random.default_rng(ss)


def _run_one(args):
    spec, methods, master_seed, ci, t = args
    problem = gen_synthetic(spec, trial_rng(master_seed, ci, t))
    ctx = _TrialContext(problem)
    return {m.label: _RUNNERS[m.name](ctx, m) for m in methods}


METRIC_NAMES = {
    "sq_err": "mse_mean",
    "support_exact": "support_exact_rate",
    "false_discovery": "false_discovery_rate",
    "missed": "missed_rate",
    "k_min_eq_kg": "k_min_eq_kg_rate",
    "rr_bound_violation": "rr_bound_violation_rate",
}


@dataclass
class ExperimentReport:
    """Aggregated sweep results plus what is needed to reproduce them."""

    records: list
    seed: int
    trials: int
    grid: list
    preset: str = "custom"
    extra: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def lookup(self, x, method_label):
        for r in self.records:
            if r["x"] == x and r["method"] == method_label:
                return r
        raise KeyError((x, method_label))

    def curve(self, method_label, metric="mse_mean"):
        return [(r["x"], r[metric]) for r in self.records if r["method"] == method_label]

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "preset": self.preset,
            "seed": self.seed,
            "trials": self.trials,
            "grid": self.grid,
            "records": self.records,
            "extra": self.extra,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_curves_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "method", "metric", "value"])
            for r in self.records:
                for key, val in r.items():
                    if key in ("x", "method", "trials", "oracle") or val is None:
                        continue
                    w.writerow([repr(r["x"]), r["method"], key, repr(val)])


def run_monte_carlo(grid, methods, trials, seed=0, workers=1):
    """Average every method's metrics over ``trials`` draws per grid point.

    ``grid`` is a list of (x, SyntheticSpec).  Oblivious methods only see
    ``problem.blind()``; the truth is used afterwards to score them.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    methods = list(methods)
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise DomainError("duplicate method labels in sweep")
    jobs = [(spec, methods, seed, ci, t) for ci, (_, spec) in enumerate(grid) for t in range(trials)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_one(j) for j in jobs]

    records = []
    for ci, (x, spec) in enumerate(grid):
        block = results[ci * trials:(ci + 1) * trials]
        for m in methods:
            sums = {}
            for res in block:
                for key, val in res[m.label].items():
                    sums[key] = sums.get(key, 0.0) + val
            rec = {"x": x, "method": m.label, "trials": trials, "oracle": m.oracle}
            for key in METRIC_NAMES.values():
                rec[key] = None
            for key, total in sums.items():
                rec[METRIC_NAMES.get(key, key + "_mean")] = total / trials
            records.append(rec)
    grid_out = [{"x": x, "spec": asdict(spec)} for x, spec in grid]
    return ExperimentReport(records, int(seed), int(trials), grid_out)


# -- theorem-level experiments ------------------------------------------------

FIG1_SPEC = SyntheticSpec(n=50, p=10, k_g=5, outlier_model=MODEL1, sigma2=1.0,
                          design=SCALED, outlier_sign="positive")


@dataclass
class RrBoundResult:
    """Per-(sigma2, alpha) rates from repeated RR sequences."""

    trials: int
    cells: dict          # (sigma2, alpha) -> {"violation_rate", "last_crossing_rate"}
    k_min_eq_kg: dict    # sigma2 -> rate
    k_min_infinite: dict  # sigma2 -> count
    median_rr_kmin: dict  # sigma2 -> median RR(k_min) over trials with finite k_min

    def to_dict(self):
        return {
            "trials": self.trials,
            "cells": [{"sigma2": s, "alpha": a, **v} for (s, a), v in self.cells.items()],
            "k_min_eq_kg_rate": {repr(s): v for s, v in self.k_min_eq_kg.items()},
            "k_min_infinite": {repr(s): v for s, v in self.k_min_infinite.items()},
            "median_rr_kmin": {repr(s): v for s, v in self.median_rr_kmin.items()},
        }


def validate_theorem2(alphas=(0.1, 0.01), sigma2s=(1.0, 0.1), trials=1000, seed=0,
                      base=FIG1_SPEC, gamma_fn=None):
    """Empirical P(exists k > k_min : RR(k) < Gamma(k)) and companions.

    ``gamma_fn(n, p, alpha) -> table`` replaces the threshold table; it
    exists so tests can check that a wrong threshold is caught.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    n, p = base.n, base.p
    k_max = n - p - 1
    if gamma_fn is None:
        def gamma_fn(n, p, alpha):
            return rrt_threshold_table(n, p, RrtConfig(alpha, k_max))
    tables = {a: gamma_fn(n, p, a) for a in alphas}
    cells, kmin_rate, kmin_inf, med = {}, {}, {}, {}
    for si, s2 in enumerate(sigma2s):
        spec = base.with_(sigma2=float(s2))
        viol = {a: 0 for a in alphas}
        last = {a: 0 for a in alphas}
        eq, inf = 0, 0
        rr_kmin = []
        for t in range(trials):
            problem = gen_synthetic(spec, trial_rng(seed, si, t))
            trace = gard_run(problem.blind(), FullTrace(k_max))
            k_min = trace.k_min(problem.truth.outlier_support)
            if math.isinf(k_min):
                inf += 1
            else:
                eq += int(k_min == spec.k_g)
                if k_min >= 1:
                    rr_kmin.append(float(trace.residual_ratios[k_min - 1]))
            for a in alphas:
                viol[a] += int(_violates(trace, tables[a], k_min))
                last[a] += int(_last_crossing(trace, tables[a]) == k_min)
        for a in alphas:
            cells[(float(s2), float(a))] = {"violation_rate": viol[a] / trials,
                                            "last_crossing_rate": last[a] / trials}
        kmin_rate[float(s2)] = eq / trials
        kmin_inf[float(s2)] = inf
        med[float(s2)] = float(np.median(rr_kmin)) if rr_kmin else math.nan
    return RrBoundResult(trials, cells, kmin_rate, kmin_inf, med)


def rr_samples_fixed_support(spec, ks, trials, seed=0):
    """RR(k)^2 along a fixed support sequence that covers S_g first.

    The sequence is S_g (in index order) followed by the remaining rows
    in index order, so the first k_g steps cover the outliers and later
    steps only remove noise directions.  Returns {k: array of RR(k)^2}.
    """
    out = {k: np.empty(trials) for k in ks}
    for t in range(trials):
        problem = gen_synthetic(spec, trial_rng(seed, 0, t))
        S = list(problem.truth.outlier_support)
        rest = [i for i in range(spec.n) if i not in set(S)]
        order = S + rest
        for k in ks:
            if k <= spec.k_g:
                raise DomainError("k must exceed k_g")
            r_prev = joint_ls(problem, order[:k - 1]).residual_norm
            r_k = joint_ls(problem, order[:k]).residual_norm
            out[k][t] = (r_k / r_prev) ** 2
    return out


def boxplot_outliers(residual):
    """Tukey fences (Q1 - 1.5 IQR, Q3 + 1.5 IQR), linear-interpolated quartiles.

    Returns (flagged 0-based indices, (lo, hi)).  When the IQR is zero the
    fences collapse to the median and only entries different from it are
    flagged.
    """
    r = np.asarray(residual, dtype=float)
    if r.ndim != 1 or r.size < 4:
        raise DomainError("box plot needs a vector of length >= 4")
    q1, med, q3 = np.percentile(r, [25, 50, 75], method="linear")
    iqr = q3 - q1
    if iqr == 0:
        flagged = np.flatnonzero(r != med)
        return tuple(int(i) for i in flagged), (float(med), float(med))
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    flagged = np.flatnonzero((r < lo) | (r > hi))
    return tuple(int(i) for i in flagged), (float(lo), float(hi))


@dataclass
class TheoremDiagnostics:
    delta_at_Sg: float
    g_min: float
    g_norm: float
    w_norm: float
    epsilon_sigma: float
    epsilon_gard: float
    epsilon_rrt: float
    gamma_kg: float
    oinr_extra: float
    oinr_extra_bound: float
    delta_condition: bool
    conditions_met: bool


def oinr_extra_bound(gamma):
    """Upper end of the OINR_extra bracket, max(1, (2+sqrt6+2/Gamma)/(4+2 sqrt6))."""
    if gamma <= 0:
        return math.inf
    return max(1.0, (2.0 + math.sqrt(6.0) + 2.0 / gamma) / (4.0 + 2.0 * math.sqrt(6.0)))


def theorem_diagnostics(problem, alpha=0.1, k_max=None):
    """Evaluate the recovery-guarantee quantities for one synthetic trial.

    delta is evaluated at the true support only (no enumeration).
    ``conditions_met`` is delta^2 < g_min / (2 ||g||) together with
    ||w|| <= epsilon_GARD.  OINR_extra is epsilon_GARD / min(epsilon_RRT,
    epsilon_GARD) when both are positive, else nan.
    """
    truth = problem.truth
    if truth is None:
        raise DomainError("theorem diagnostics need the truth block")
    S = list(truth.outlier_support)
    if not S:
        raise DomainError("theorem diagnostics need at least one outlier")
    n, p, k_g = problem.n, problem.p, len(S)
    Q, _ = qr_factor(problem.X)
    delta = delta_subset(Q, S)
    g = truth.g_out
    g_min = float(np.min(np.abs(g[S])))
    g_norm = float(np.linalg.norm(g))
    w_norm = float(np.linalg.norm(truth.noise)) if truth.noise is not None else math.nan
    eps_sig = epsilon_sigma(n, truth.sigma2)
    eps_gard = (g_min - 2.0 * delta ** 2 * g_norm) / (2.0 + math.sqrt(6.0))
    table = rrt_threshold_table(n, p, RrtConfig(alpha, k_max))
    gamma = table.at(k_g)
    eps_rrt = (g_min - delta ** 2 * g_norm) / (
        (1.0 / gamma if gamma > 0 else math.inf) + 1.0 + math.sqrt(1.5))
    if eps_gard > 0 and eps_rrt > 0:
        oinr = eps_gard / min(eps_rrt, eps_gard)
    else:
        oinr = math.nan
    delta_ok = delta ** 2 < g_min / (2.0 * g_norm)
    return TheoremDiagnostics(
        delta_at_Sg=delta, g_min=g_min, g_norm=g_norm, w_norm=w_norm,
        epsilon_sigma=eps_sig, epsilon_gard=eps_gard, epsilon_rrt=eps_rrt,
        gamma_kg=gamma, oinr_extra=oinr, oinr_extra_bound=oinr_extra_bound(gamma),
        delta_condition=bool(delta_ok),
        conditions_met=bool(delta_ok and w_norm <= eps_gard),
    )
