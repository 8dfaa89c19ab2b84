"""The acceptance criteria as plain functions returning pass/fail records.

Rate thresholds are stated at a nominal trial count N.  When a run uses
T trials instead, a threshold tau is moved by the change in the 3-sigma
binomial half-width, 3 (sqrt(tau (1 - tau) / T) - sqrt(tau (1 - tau) / N)),
loosened in the direction of the check; at T = N nothing changes.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import bench
from .bench import MODEL1, MODEL2, MEDIAN16, MethodSpec, SyntheticSpec
from .cli import detect_outliers
from .datasets import load_builtin
from .gard import FullTrace, gard_run
from .linalg import RegressionProblem, joint_ls
from .numerics import beta_cdf, beta_cdf_vec, beta_inv_cdf
from .rrt import Constant, Exponential, SuperExponential, gamma_asymptotics


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d}: {self.name} ({self.seconds:.1f}s)"

    def to_dict(self):
        return {"number": self.number, "name": self.name, "passed": bool(self.passed),
                "seconds": self.seconds, "details": self.details}


def widened(tau, trials, nominal, upper=True):
    """Threshold for a rate check run at ``trials`` instead of ``nominal``."""
    sd = math.sqrt(max(tau * (1.0 - tau), 0.0))
    shift = 3.0 * sd * (1.0 / math.sqrt(trials) - 1.0 / math.sqrt(nominal))
    return tau + shift if upper else tau - shift


def _scaled(nominal, scale):
    return max(1, int(round(nominal * scale)))


def _timed(fn):
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res


# -- 1-3: the RR sequence experiment ---------------------------------------------

def rr_bound_run(trials=1000, seed=0, gamma_fn=None):
    return bench.validate_theorem2(alphas=(0.1, 0.01), sigma2s=(1.0, 0.1), trials=trials,
                                   seed=seed, gamma_fn=gamma_fn)


def criterion1(run, elapsed, nominal=1000):
    T = run.trials
    checks = {}
    for (s2, a), cell in run.cells.items():
        lim = widened(a, T, nominal)
        checks[f"sigma2={s2},alpha={a}"] = (cell["violation_rate"], lim,
                                            cell["violation_rate"] <= lim)
    band_hi = widened(0.02, T, nominal)
    v = run.cells[(1.0, 0.1)]["violation_rate"]
    checks["band sigma2=1,alpha=0.1"] = (v, band_hi, 0.0 <= v <= band_hi)
    checks["runtime<60s"] = (elapsed, 60.0, elapsed < 60.0)
    ok = all(c[2] for c in checks.values())
    return CriterionResult(1, "RR lower-bound violation rate <= alpha", ok,
                           {k: list(v) for k, v in checks.items()})


def criterion2(run, nominal=1000):
    T = run.trials
    lim1, lim01 = widened(0.98, T, nominal, upper=False), widened(0.995, T, nominal, upper=False)
    r1, r01 = run.k_min_eq_kg[1.0], run.k_min_eq_kg[0.1]
    ok = r1 >= lim1 and r01 >= lim01
    return CriterionResult(2, "k_min = k_g concentration", ok,
                           {"sigma2=1": [r1, lim1], "sigma2=0.1": [r01, lim01]})


def criterion3(run, nominal=1000):
    T = run.trials
    a = run.cells[(1.0, 0.1)]["last_crossing_rate"]
    b = run.cells[(1.0, 0.01)]["last_crossing_rate"]
    la, lb = widened(0.96, T, nominal, upper=False), widened(0.85, T, nominal, upper=False)
    return CriterionResult(3, "last crossing identifies k_min", a >= la and b >= lb,
                           {"alpha=0.1": [a, la], "alpha=0.01": [b, lb]})


# -- 4: asymptotics of Gamma ------------------------------------------------------

def criterion4():
    grid = (100, 1000, 10000)
    details, ok = {}, True
    for d in (0.0, 0.4, 0.8):
        g = [v for _, v in gamma_asymptotics(Constant(0.1), d, grid)]
        inc = all(x < y for x, y in zip(g, g[1:])) and g[-1] > g[0]
        details[f"constant d_lim={d}"] = g
        ok &= inc
    g_exp = dict(gamma_asymptotics(Exponential(-0.5), 0.0, (10000,)))[10000]
    rel = abs(g_exp - math.exp(-0.5)) / math.exp(-0.5)
    details["exponential Gamma(1e4)"] = [g_exp, rel]
    ok &= rel < 0.02
    g_sup = dict(gamma_asymptotics(SuperExponential(100.0), 0.0, (1000,)))[1000]
    details["super-exponential Gamma(1e3)"] = g_sup
    ok &= g_sup < 0.05
    return CriterionResult(4, "Gamma(k_g) asymptotic regimes", bool(ok), details)


# -- 5-8: Monte Carlo sweeps ------------------------------------------------------

def criterion5(seed=0, trials=1000, nominal=1000):
    spec = SyntheticSpec(n=200, p=10, k_g=10, outlier_model=MODEL1, sigma2=1e-6)
    rep = bench.run_monte_carlo([(10, spec)], [MethodSpec("rrt-gard", params=(("alpha", 0.1),))],
                                trials, seed=seed)
    r = rep.records[0]
    err = 1.0 - r["support_exact_rate"]
    lim_e = widened(0.13, trials, nominal)
    lim_m = widened(0.005, trials, nominal)
    ok = err <= lim_e and r["missed_rate"] <= lim_m
    return CriterionResult(5, "high-SNR support recovery", ok,
                           {"P(S != S_g)": [err, lim_e], "missed": [r["missed_rate"], lim_m]})


def criterion6(seed=0, trials=100, nominal=100):
    base = SyntheticSpec(n=200, p=10, outlier_model=MODEL1, sigma2=1.0)
    grid = [(kg, base.with_(k_g=kg)) for kg in (10, 20, 40)]
    rrt = MethodSpec("rrt-gard", params=(("alpha", 0.1),))
    best, lsof = MethodSpec("best-alpha"), MethodSpec("ls-of")
    rep = bench.run_monte_carlo(grid, [rrt, best, lsof], trials, seed=seed)
    # 1.5x is stated at 100 trials; scale the slack by the Monte Carlo error ratio
    slack = 1.5 + 0.5 * (math.sqrt(nominal / trials) - 1.0)
    ok, details, checked = True, {}, 0
    for kg, _ in grid:
        m_rrt = rep.lookup(kg, rrt.label)["mse_mean"]
        m_best = rep.lookup(kg, best.label)["mse_mean"]
        m_of = rep.lookup(kg, lsof.label)["mse_mean"]
        applies = m_best <= 2.0 * m_of
        good = (m_rrt <= slack * m_best) if applies else True
        checked += applies
        ok &= good
        details[f"k_g={kg}"] = {"rrt": m_rrt, "best": m_best, "ls_of": m_of,
                                "applies": applies, "ok": good}
    details["slack"] = slack
    return CriterionResult(6, "alpha=0.1 near Best-alpha", bool(ok and checked > 0), details)


def criterion7(seed=0, trials=100):
    base = SyntheticSpec(n=200, p=10, outlier_model=MODEL1, sigma2=1.0)
    grid = [(f, base.with_(k_g=int(round(f * 200)))) for f in (0.1, 0.2)]
    rrt = MethodSpec("rrt-gard", params=(("alpha", 0.1),))
    rivals = [MethodSpec("gard", "scheme1"), MethodSpec("rmap", "scheme1"),
              MethodSpec("ipod", "scheme1"), MethodSpec("m-est")]
    rep = bench.run_monte_carlo(grid, [rrt] + rivals, trials, seed=seed)
    ok, details = True, {}
    for f, _ in grid:
        m = rep.lookup(f, rrt.label)["mse_mean"]
        row = {"rrt-gard": m}
        for rv in rivals:
            v = rep.lookup(f, rv.label)["mse_mean"]
            row[rv.label] = v
            ok &= m <= v
        details[f"k_g/n={f}"] = row
    return CriterionResult(7, "RRT-GARD beats sigma-estimated methods", bool(ok), details)


def criterion8(seed=0, trials=100):
    base = SyntheticSpec(n=200, p=10, outlier_model=MODEL2, sigma2=MEDIAN16)
    grid = [(f, base.with_(k_g=int(round(f * 200)))) for f in (0.05, 0.3)]
    m = MethodSpec("sigma", "scheme1")
    rep = bench.run_monte_carlo(grid, [m], trials, seed=seed)
    lo = rep.lookup(0.05, m.label)["sigma_rel_error_mean"]
    hi = rep.lookup(0.3, m.label)["sigma_rel_error_mean"]
    return CriterionResult(8, "scheme-1 sigma error grows with k_g/n", hi > lo,
                           {"k_g/n=0.05": lo, "k_g/n=0.3": hi})


# -- 9: real data -----------------------------------------------------------------

REAL_DATA_EXPECTED = {
    "stackloss": {"indices": (1, 3, 4, 21)},
    "star": {"indices": (11, 20, 30, 34)},
    # the reference numbering has 27 animals; compare by name instead of index
    "brain-body": {"labels": ("Mountain beaver", "Dipliodocus", "Human", "Triceratops",
                              "Rhesus monkey", "Brachiosaurus")},
    "ar2000": {"indices": (9, 21, 30, 31, 38, 47)},
}


def real_data_check(name, alpha):
    """(passed, detail) for one dataset at one alpha."""
    try:
        ds = load_builtin(name)
    except FileNotFoundError as exc:
        return False, {"error": str(exc)}
    _, flagged, fences, _ = detect_outliers(ds.problem, method="rrt-gard", alpha=alpha)
    got_idx = tuple(i + 1 for i in flagged)
    got_lab = tuple(ds.labels[i] for i in flagged)
    want = REAL_DATA_EXPECTED[name]
    if "labels" in want:
        ok = set(got_lab) == set(want["labels"])
        return ok, {"flagged": got_lab, "expected": want["labels"], "fences": fences}
    ok = set(got_idx) == set(want["indices"])
    return ok, {"flagged": got_idx, "expected": want["indices"], "fences": fences}


def criterion9():
    ok, details = True, {}
    for name in REAL_DATA_EXPECTED:
        for alpha in (0.1, 0.2):
            good, d = real_data_check(name, alpha)
            details[f"{name} alpha={alpha}"] = {"ok": good, **d}
            ok &= good
    return CriterionResult(9, "real-data outlier sets", bool(ok), details)


# -- 10: numerics -----------------------------------------------------------------

def beta_roundtrip_errors(samples=2000, seed=0):
    """Relative |F(F^-1(q)) - q| / q over a randomized (a, b, q) grid.

    a is log-uniform on [0.5, 500], b is 0.5 (the RRT case) for half the
    draws and log-uniform on [0.5, 50] otherwise, q is log-uniform on
    [1e-12, 0.999].
    """
    rng = np.random.default_rng(seed)
    a = np.exp(rng.uniform(math.log(0.5), math.log(500.0), samples))
    b = np.where(rng.random(samples) < 0.5, 0.5,
                 np.exp(rng.uniform(math.log(0.5), math.log(50.0), samples)))
    q = np.exp(rng.uniform(math.log(1e-12), math.log(0.999), samples))
    errs = np.empty(samples)
    for i in range(samples):
        x = beta_inv_cdf(a[i], b[i], q[i])
        errs[i] = abs(beta_cdf(a[i], b[i], x) - q[i]) / q[i]
    return errs


def fresh_gard_order(problem, k_max):
    """Reference GARD: refactor [X, I_S] from scratch at every step."""
    S, norms = [], [joint_ls(problem, []).residual_norm]
    r = joint_ls(problem, []).residual
    for _ in range(k_max):
        scores = np.abs(r)
        scores[S] = -1.0
        i = int(np.argmax(scores))
        S.append(i)
        fit = joint_ls(problem, S)
        r = fit.residual
        norms.append(fit.residual_norm)
    return S, np.array(norms)


def incremental_vs_fresh(problems=100, seed=0):
    rng = np.random.default_rng(seed)
    worst, same = 0.0, True
    for _ in range(problems):
        n = int(rng.integers(15, 60))
        p = int(rng.integers(1, max(2, n // 4)))
        X = rng.normal(size=(n, p))
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        k = int(rng.integers(1, max(2, n // 5)))
        idx = rng.choice(n, size=k, replace=False)
        y[idx] += rng.choice([-1, 1], size=k) * rng.uniform(5, 20, size=k)
        prob = RegressionProblem(y, X)
        k_max = n - p - 1
        trace = gard_run(prob, FullTrace(k_max))
        order, norms = fresh_gard_order(prob, trace.steps)
        same &= list(trace.order) == order
        m = len(norms)
        scale = np.maximum(norms, 1e-300)
        # compare where the residual is not yet at round-off level
        live = norms > 1e-10 * norms[0]
        rel = np.abs(trace.residual_norms[:m] - norms) / scale
        worst = max(worst, float(np.max(rel[live])))
    return same, worst


def criterion10(seed=0):
    errs = beta_roundtrip_errors(seed=seed)
    same, worst = incremental_vs_fresh(seed=seed)
    ok = float(errs.max()) <= 1e-9 and same and worst <= 1e-8
    return CriterionResult(10, "Beta round trip and incremental QR", bool(ok),
                           {"beta_roundtrip_max_rel": float(errs.max()),
                            "supports_identical": same, "norm_max_rel": worst})


# -- 11: distribution of RR(k)^2 ----------------------------------------------

def criterion11(seed=0, trials=1000, ks=(8, 20, 35)):
    spec = SyntheticSpec(n=50, p=10, k_g=5, outlier_model=MODEL1, sigma2=1.0,
                         design=bench.SCALED, outlier_sign="positive")
    samples = bench.rr_samples_fixed_support(spec, ks, trials, seed=seed)
    details, ok = {}, True
    for k in ks:
        a = (spec.n - spec.p - k) / 2.0
        res = stats.kstest(samples[k], lambda x, a=a: beta_cdf_vec(a, 0.5, x))
        details[f"k={k}"] = {"statistic": float(res.statistic), "pvalue": float(res.pvalue)}
        ok &= res.pvalue > 0.01
    return CriterionResult(11, "RR(k)^2 ~ Beta((n-p-k)/2, 1/2) for k > k_g", bool(ok), details)


# -- driver ---------------------------------------------------------------------

def run_all(seed=0, trials_scale=1.0, skip_slow=False):
    """Run every criterion; ``trials_scale`` shrinks or grows all trial counts."""
    out = []
    t0 = time.perf_counter()
    run = rr_bound_run(_scaled(1000, trials_scale), seed)
    elapsed = time.perf_counter() - t0
    for c in (criterion1(run, elapsed), criterion2(run), criterion3(run)):
        c.seconds = elapsed
        out.append(c)
    out.append(_timed(criterion4))
    if not skip_slow:
        out.append(_timed(lambda: criterion5(seed, _scaled(1000, trials_scale))))
        out.append(_timed(lambda: criterion6(seed, _scaled(100, trials_scale))))
        out.append(_timed(lambda: criterion7(seed, _scaled(100, trials_scale))))
        out.append(_timed(lambda: criterion8(seed, _scaled(100, trials_scale))))
    out.append(_timed(criterion9))
    out.append(_timed(lambda: criterion10(seed)))
    out.append(_timed(lambda: criterion11(seed, _scaled(1000, trials_scale))))
    return out
