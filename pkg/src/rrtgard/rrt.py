"""Residual ratio thresholding (RRT) on top of a full GARD trace.

The threshold Gamma(k) = sqrt(F^{-1}_{(n-p-k)/2, 1/2}(alpha / (k_max (n-k+1))))
depends only on (n, p, alpha).  RRT-GARD picks the last step whose
residual ratio falls to or below it, so no noise variance, inlier norm or
outlier count is ever needed.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError
from .estimate import RobustEstimate
from .gard import FullTrace, gard_run
from .linalg import joint_ls
from .numerics import beta_cdf, beta_inv_cdf, beta_inv_cdf_log

DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class RrtConfig:
    alpha: float = DEFAULT_ALPHA
    k_max: Optional[int] = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError(f"alpha must be non-negative, got {self.alpha}")

    def resolve_k_max(self, n, p):
        k_max = n - p - 1 if self.k_max is None else self.k_max
        if not 1 <= k_max <= n - p - 1:
            raise DomainError(f"k_max must be in [1, n-p-1={n - p - 1}], got {k_max}")
        return k_max


@dataclass(frozen=True)
class RrtThresholdTable:
    n: int
    p: int
    alpha: float
    k_max: int
    gamma: np.ndarray

    def __len__(self):
        return len(self.gamma)

    def at(self, k):
        return float(self.gamma[k - 1])


def _gamma(n, p, k, k_max, alpha):
    if alpha <= 0:
        return 0.0
    q = alpha / (k_max * (n - k + 1))
    if q >= 1.0:
        return 1.0
    return math.sqrt(beta_inv_cdf((n - p - k) / 2.0, 0.5, q))


@lru_cache(maxsize=4096)
def _cached_table(n, p, alpha, k_max):
    gamma = np.array([_gamma(n, p, k, k_max, alpha) for k in range(1, k_max + 1)])
    gamma.setflags(write=False)
    return RrtThresholdTable(n, p, alpha, k_max, gamma)


def rrt_threshold_table(n, p, config=RrtConfig()):
    """Gamma(k) for k = 1..k_max (cached; the array is read-only)."""
    k_max = config.resolve_k_max(n, p)
    return _cached_table(int(n), int(p), float(config.alpha), int(k_max))


def required_alpha(rr, n, p, k, k_max):
    """Smallest alpha for which RR(k) <= Gamma^alpha(k)."""
    return k_max * (n - k + 1) * beta_cdf((n - p - k) / 2.0, 0.5, min(max(rr, 0.0), 1.0) ** 2)


@dataclass
class RrtSelection:
    k_rrt: int
    alpha_used: float
    fallback_engaged: bool
    crossings: tuple
    table: RrtThresholdTable = field(repr=False)
    collapsed_saturation: bool = False


def _crossings(ratios, gamma, saturated, n_valid):
    hits = (ratios[:n_valid] <= gamma[:n_valid]) | saturated[:n_valid]
    return tuple(int(k) + 1 for k in np.flatnonzero(hits))


def select_k_rrt(ratios, table, saturated=None, n_valid=None):
    """Last k with RR(k) <= Gamma(k), with the alpha_new fallback.

    ``n_valid`` is the number of real (non-padded) ratios; padded entries
    never count as crossings.  Saturated entries (ratio forced to 0 after
    the residual hit numerical zero) count as crossings, but a last
    crossing inside the saturated run is pulled back to the step where
    the residual first vanished, since later steps only flag inliers.
    """
    ratios = np.asarray(ratios, dtype=float)
    if len(ratios) != len(table):
        raise DomainError(f"{len(ratios)} ratios for a table of length {len(table)}")
    if saturated is None:
        saturated = np.zeros(len(ratios), dtype=bool)
    saturated = np.asarray(saturated, dtype=bool)
    if n_valid is None:
        n_valid = len(ratios)

    alpha_used = table.alpha
    fallback = False
    crossings = _crossings(ratios, table.gamma, saturated, n_valid)
    if not crossings and n_valid > 0:
        n, p, k_max = table.n, table.p, table.k_max
        need = [required_alpha(ratios[k - 1], n, p, k, k_max) for k in range(1, n_valid + 1)]
        alpha_used = max(table.alpha, min(need))
        fallback = True
        for _ in range(60):
            table = rrt_threshold_table(n, p, RrtConfig(alpha_used, k_max))
            crossings = _crossings(ratios, table.gamma, saturated, n_valid)
            if crossings:
                break
            # the inverse CDF can land one ulp short of RR(k); nudge alpha up
            alpha_used = alpha_used * (1.0 + 1e-12) + 1e-300
    if not crossings:
        return RrtSelection(0, alpha_used, fallback, (), table)

    k_rrt = crossings[-1]
    collapsed = False
    if saturated[k_rrt - 1]:
        first = int(np.flatnonzero(saturated[:n_valid])[0]) + 1
        k_rrt = first - 1
        collapsed = True
    return RrtSelection(k_rrt, float(alpha_used), fallback, crossings, table, collapsed)


def rrt_gard(problem, config=RrtConfig()):
    """Noise-statistics-oblivious robust regression (RRT-GARD).

    Runs GARD to k_max, selects k_RRT from the residual ratios and refits
    jointly on the support after k_RRT steps.
    """
    return rrt_gard_multi(problem, [config.alpha], k_max=config.k_max)[0]


def rrt_gard_multi(problem, alphas, k_max=None):
    """RRT-GARD for several alphas sharing one GARD trace."""
    k_max = RrtConfig(k_max=k_max).resolve_k_max(problem.n, problem.p)
    return rrt_from_trace(problem, gard_run(problem, FullTrace(k_max)), alphas)


def rrt_from_trace(problem, trace, alphas):
    """RRT selection and joint refit for each alpha, given a full GARD trace."""
    n, p = problem.n, problem.p
    k_max = trace.k_max
    if k_max is None:
        raise DomainError("RRT needs a FullTrace GARD run")
    fits = {}
    out = []
    for alpha in alphas:
        table = rrt_threshold_table(n, p, RrtConfig(alpha, k_max))
        sel = select_k_rrt(trace.residual_ratios, table, trace.saturated, trace.effective_k_max)
        if sel.k_rrt not in fits:
            fits[sel.k_rrt] = joint_ls(problem, trace.support_at(sel.k_rrt))
        method = {
            "name": "rrt-gard",
            "alpha": float(alpha),
            "alpha_used": sel.alpha_used,
            "fallback_engaged": sel.fallback_engaged,
            "k_rrt": sel.k_rrt,
            "k_max": k_max,
            "effective_k_max": trace.effective_k_max,
            "termination": trace.termination.value,
            "sigma_source": "none",
        }
        out.append(RobustEstimate.from_joint(problem, fits[sel.k_rrt], method))
    return out


# -- asymptotic behaviour of Gamma(k_g) ---------------------------------------

@dataclass(frozen=True)
class Constant:
    alpha: float

    def log_alpha(self, n):
        return math.log(self.alpha)


@dataclass(frozen=True)
class InverseLog:
    def log_alpha(self, n):
        return -math.log(math.log(n))


@dataclass(frozen=True)
class InversePoly:
    c: float

    def log_alpha(self, n):
        return -self.c * math.log(n)


@dataclass(frozen=True)
class Exponential:
    """alpha = exp(alpha_lim * n), so log(alpha)/n -> alpha_lim."""

    alpha_lim: float

    def log_alpha(self, n):
        return self.alpha_lim * n


@dataclass(frozen=True)
class SuperExponential:
    """alpha = exp(-n^2 / scale): log(alpha)/n -> -inf."""

    scale: float = 1.0

    def log_alpha(self, n):
        return -(n * n) / self.scale


def asymptotic_dims(n, d_lim):
    """p = k_g = round(d_lim n / 2), at least 2."""
    if not 0 <= d_lim < 1:
        raise DomainError(f"d_lim must be in [0, 1), got {d_lim}")
    p = max(2, int(round(d_lim * n / 2.0)))
    if n - 2 * p < 2:
        raise DomainError(f"n={n} too small for d_lim={d_lim}")
    return p, p


def gamma_at(n, p, k, log_alpha, k_max=None):
    """Gamma^alpha(k) from log(alpha); handles alpha far below 1e-300."""
    if k_max is None:
        k_max = n - p - 1
    log_q = log_alpha - math.log(k_max * (n - k + 1))
    if log_q >= 0.0:
        return 1.0
    return math.sqrt(beta_inv_cdf_log((n - p - k) / 2.0, 0.5, log_q))


def gamma_asymptotics(alpha_rule, d_lim, n_grid):
    """[(n, Gamma(k_g))] along ``n_grid`` with k_max = n - p - 1."""
    out = []
    for n in n_grid:
        p, k_g = asymptotic_dims(n, d_lim)
        out.append((int(n), gamma_at(n, p, k_g, alpha_rule.log_alpha(n))))
    return out
