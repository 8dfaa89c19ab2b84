"""Comparison estimators and inlier-noise scale estimates.

LS, LAD, bisquare M-estimation, RMAP (l1-penalized joint fit), IPOD
(hard-thresholded alternating fit), the re-projection refit, and the two
sigma estimates used to feed sigma-dependent methods when the true noise
level is unknown.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConvergenceError, DomainError, RankDeficientError
from .estimate import RobustEstimate
from .linalg import RANK_RTOL, joint_ls, qr_factor

BISQUARE_C = 4.685
MAD_TO_SIGMA = 1.4826
LAD_SCALE = 0.675
REPROJECT_GAMMA = {"rmap": 3.0, "ipod": 3.0, "bprr": 3.0, "arosi": 5.0}


def ls_fit(problem):
    """Ordinary least squares; flags nothing."""
    Q, R = qr_factor(problem.X)
    beta = np.linalg.solve(R, Q.T @ problem.y)
    return RobustEstimate.from_fit(problem, beta, method={"name": "ls", "sigma_source": "none"})


def _wls(X, y, w):
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return beta


def _lad_irls(X, y, max_iter=200, rtol=1e-8):
    """IRLS approximation to LAD, weights 1 / max(|r_i|, 1e-6 ||y|| / sqrt(n))."""
    n = X.shape[0]
    floor = max(1e-6 * float(np.linalg.norm(y)) / math.sqrt(n), 1e-300)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    best, best_obj = beta, float(np.sum(np.abs(y - X @ beta)))
    for _ in range(max_iter):
        w = 1.0 / np.maximum(np.abs(y - X @ beta), floor)
        new = _wls(X, y, w)
        obj = float(np.sum(np.abs(y - X @ new)))
        if obj < best_obj:
            best, best_obj = new, obj
        if np.linalg.norm(new - beta) <= rtol * max(np.linalg.norm(beta), 1e-12):
            break
        beta = new
    return best


def lad_fit(problem):
    """Least absolute deviations, solved exactly as a linear program.

    min sum(u + v) s.t. X b + u - v = y, u, v >= 0, via HiGHS.  The LP
    optimum is an interpolating vertex, so the objective is exact up to
    solver tolerance.  If the LP fails, the IRLS iterate is attached to
    the raised error.
    """
    X, y = problem.X, problem.y
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.ones(2 * n)])
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        est = RobustEstimate.from_fit(problem, _lad_irls(X, y), method={"name": "lad"})
        raise ConvergenceError(f"LAD linear program failed: {res.message}", best=est)
    return RobustEstimate.from_fit(
        problem, res.x[:p], method={"name": "lad", "sigma_source": "none", "solver": "highs"})


def _leverage(X):
    Q, _ = np.linalg.qr(X)
    return np.sum(Q * Q, axis=1)


def _mad_sigma(r, p):
    # scale from the residuals, ignoring the p smallest |r| (exact-fit zeros)
    a = np.sort(np.abs(r))
    a = a[max(1, p) - 1:] if a.size > p else a
    return float(np.median(a)) / 0.6745


def bisquare_weights(u, c=BISQUARE_C):
    t = np.abs(u) / c
    return np.where(t < 1.0, (1.0 - t * t) ** 2, 0.0)


def m_estimate(problem, c=BISQUARE_C, max_iter=100, rtol=1e-8):
    """Tukey-bisquare M-estimate by IRLS, scale re-estimated by MAD each pass.

    Residuals are leverage-adjusted, r_i / (s sqrt(1 - h_i)).  If every
    weight collapses to zero the fit restarts from LAD and says so in
    ``method["flags"]``.
    """
    X, y = problem.X, problem.y
    n, p = X.shape
    h = np.minimum(_leverage(X), 1.0 - 1e-12)
    adj = 1.0 / np.sqrt(1.0 - h)
    flags = []
    beta = ls_fit(problem).beta_hat
    restarted = False
    it = 0
    for it in range(1, max_iter + 1):
        r = y - X @ beta
        s = _mad_sigma(r * adj, p)
        if s <= 1e-12 * max(float(np.linalg.norm(y)), 1e-300) / math.sqrt(n):
            # (near) exact fit: weights are all 1 for the fitted points
            break
        w = bisquare_weights(r * adj / s, c)
        if not np.any(w > 0):
            if restarted:
                flags.append("zero_weights")
                break
            flags.append("restart_from_lad")
            beta = lad_fit(problem).beta_hat
            restarted = True
            continue
        new = _wls(X, y, w)
        done = np.linalg.norm(new - beta) <= rtol * max(np.linalg.norm(beta), 1e-12)
        beta = new
        if done:
            break
    return RobustEstimate.from_fit(
        problem, beta,
        method={"name": "m-est", "loss": "bisquare", "c": c, "sigma_source": "none",
                "iterations": it, "flags": flags})


@dataclass
class SigmaEstimate:
    sigma_hat: float
    scheme: str
    source_residual: str
    degenerate: bool = False
    scale: float = 1.0

    def scaled(self, factor):
        """Copy with sigma multiplied by ``factor`` (for scaled-down studies)."""
        return SigmaEstimate(self.sigma_hat * factor, self.scheme, self.source_residual,
                             self.degenerate, self.scale * factor)

    @property
    def sigma2(self):
        return self.sigma_hat ** 2


def sigma_from_lad_residual(residual, y_norm):
    """(1/0.675) median{|r_k| : r_k != 0}; |r| <= 1e-9 ||y|| counts as zero."""
    a = np.abs(np.asarray(residual, dtype=float))
    nz = a[a > 1e-9 * y_norm]
    if nz.size == 0:
        return 0.0, True
    return float(np.median(nz)) / LAD_SCALE, False


def mad(r):
    r = np.asarray(r, dtype=float)
    return float(np.median(np.abs(r - np.median(r))))


def sigma_scheme1(problem, lad=None):
    """Noise scale from the non-zero LAD residuals."""
    if lad is None:
        lad = lad_fit(problem)
    sigma, degenerate = sigma_from_lad_residual(lad.residual, float(np.linalg.norm(problem.y)))
    return SigmaEstimate(sigma, "LadMedian", "lad", degenerate)


def sigma_scheme2(problem, source="m-est", fit=None):
    """1.4826 * MAD of the M-estimate (default) or LAD residual."""
    if fit is None:
        if source == "m-est":
            fit = m_estimate(problem)
        elif source == "lad":
            fit = lad_fit(problem)
        else:
            raise DomainError(f"unknown residual source {source!r}")
    return SigmaEstimate(MAD_TO_SIGMA * mad(fit.residual), "MadOfResidual", source)


def rmap_lambda(n, sigma):
    """sigma * sqrt(2 log n) / 3."""
    return sigma * math.sqrt(2.0 * math.log(n)) / 3.0


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def rmap_objective(problem, beta, g, lam):
    r = problem.y - problem.X @ beta - g
    return float(r @ r + lam * np.sum(np.abs(g)))


def _rmap_gap(z, g, mu, Pfun):
    # lasso  min_g 1/2 ||z - M g||^2 + mu ||g||_1  with M = I - P (idempotent)
    Mg = g - Pfun(g)
    resid = z - Mg
    primal = 0.5 * float(resid @ resid) + mu * float(np.sum(np.abs(g)))
    corr = resid - Pfun(resid)  # M^T resid
    cmax = float(np.max(np.abs(corr))) if corr.size else 0.0
    theta = resid * (min(1.0, mu / cmax) if cmax > 0 else 1.0)
    dual = 0.5 * float(z @ z) - 0.5 * float((z - theta) @ (z - theta))
    return primal, primal - dual


def rmap_fit(problem, sigma, lam=None, sigma_source="true", max_iter=50000, tol=1e-8,
             history=None):
    """RMAP: min_{b,g} ||y - X b - g||^2 + lam ||g||_1.

    b is eliminated (b = X^+(y - g)), leaving an l1 problem in g over the
    residual-space projection M = I - P_X.  Solved by monotone FISTA with
    step 1 (M has spectral norm 1) and threshold lam/2, until the duality
    gap falls below tol * ||y||^2.
    """
    X, y = problem.X, problem.y
    n = problem.n
    if lam is None:
        lam = rmap_lambda(n, sigma)
    mu = lam / 2.0
    Q, R = qr_factor(X)

    def P(v):
        return Q @ (Q.T @ v)

    z = y - P(y)
    g = np.zeros(n)
    v = g.copy()
    t = 1.0
    gap_tol = tol * max(float(y @ y), 1e-300)
    obj, gap = _rmap_gap(z, g, mu, P)
    it = 0
    for it in range(1, max_iter + 1):
        grad_point = v - ((v - P(v)) - z)  # v - M^T (M v - z)
        cand = soft_threshold(grad_point, mu)
        cand_obj, cand_gap = _rmap_gap(z, cand, mu, P)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if cand_obj <= obj:
            v = cand + ((t - 1.0) / t_next) * (cand - g)
            g, obj, gap = cand, cand_obj, cand_gap
        else:
            v = g + (t / t_next) * (cand - g)
        t = t_next
        if history is not None:
            history.append(obj)
        if gap <= gap_tol:
            break
    beta = np.linalg.solve(R, Q.T @ (y - g))
    method = {"name": "rmap", "lambda": lam, "sigma": sigma, "sigma_source": sigma_source,
              "iterations": it, "duality_gap": gap,
              "lambda_rule": "sigma*sqrt(2 log n)/3"}
    est = RobustEstimate.from_fit(problem, beta, g, method)
    if gap > gap_tol:
        raise ConvergenceError("RMAP did not reach the duality-gap tolerance", best=est)
    return est


def hard_threshold(v, t):
    return np.where(np.abs(v) > t, v, 0.0)


def ipod_fit(problem, sigma, lam=None, sigma_source="true", max_iter=500, tol=1e-8):
    """IPOD with a hard-threshold penalty, started from LS.

    Alternates g <- HT(y - X beta, lam) and beta <- X^+(y - g), with
    lam = 5 sigma by default.  A revisited support means the iteration is
    cycling; the best-objective iterate seen is returned with a flag.
    """
    X, y = problem.X, problem.y
    if lam is None:
        lam = 5.0 * sigma
    Q, R = qr_factor(X)

    def solve(rhs):
        return np.linalg.solve(R, Q.T @ rhs)

    def objective(beta, g):
        r = y - X @ beta - g
        return 0.5 * float(r @ r) + 0.5 * lam * lam * np.count_nonzero(g)

    beta = solve(y)
    g = np.zeros(problem.n)
    seen = {}
    best = (objective(beta, g), beta, g)
    flags = []
    it = 0
    for it in range(1, max_iter + 1):
        g_new = hard_threshold(y - X @ beta, lam)
        beta_new = solve(y - g_new)
        obj = objective(beta_new, g_new)
        if obj < best[0]:
            best = (obj, beta_new, g_new)
        key = tuple(np.flatnonzero(g_new))
        stable = key == tuple(np.flatnonzero(g))
        small = np.linalg.norm(beta_new - beta) <= tol * max(np.linalg.norm(beta), 1e-12)
        beta, g = beta_new, g_new
        if stable and small:
            break
        if not stable and key in seen:
            flags.append("cycling")
            _, beta, g = best
            break
        seen[key] = it
    else:
        flags.append("iteration_cap")
    method = {"name": "ipod", "lambda": lam, "sigma": sigma, "sigma_source": sigma_source,
              "iterations": it, "flags": flags}
    return RobustEstimate.from_fit(problem, beta, g, method)


def _rank_preserving_subset(problem, candidates):
    """Greedily keep candidates (given in priority order) while [X, I_S] stays full rank."""
    X = problem.X
    Q, _ = qr_factor(X)
    n, p = X.shape
    basis = [Q[:, j] for j in range(p)]
    B = Q.copy()
    kept = []
    for i in candidates:
        if len(kept) >= n - p:
            break
        v = -(B @ B[i, :])
        v[i] += 1.0
        v -= B @ (B.T @ v)
        nv = float(np.linalg.norm(v))
        if nv < RANK_RTOL:
            continue
        B = np.column_stack([B, v / nv])
        kept.append(int(i))
    return kept


def reproject(problem, estimate, gamma, sigma):
    """Threshold the robust residual at gamma*sigma, then refit on [X, I_S].

    If the flagged set makes the augmented design rank deficient, the
    largest-|r| subset that keeps full rank is used.
    """
    r = problem.y - problem.X @ estimate.beta_hat
    flagged = np.flatnonzero(np.abs(r) > gamma * sigma)
    flagged = flagged[np.argsort(-np.abs(r[flagged]), kind="stable")]
    try:
        support = sorted(int(i) for i in flagged)
        if len(support) > problem.n - problem.p:
            raise RankDeficientError("too many flagged rows")
        joint = joint_ls(problem, support)
    except RankDeficientError:
        support = sorted(_rank_preserving_subset(problem, flagged))
        joint = joint_ls(problem, support)
    method = dict(estimate.method)
    method.update({"reproject": True, "gamma": gamma, "reproject_sigma": sigma})
    return RobustEstimate.from_joint(problem, joint, method)
