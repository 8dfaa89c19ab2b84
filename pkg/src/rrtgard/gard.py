"""Greedy algorithm for robust de-noising (GARD).

Each step flags the row with the largest absolute residual as an outlier,
appends its identity column to the design, refits jointly and recomputes
the residual.  The refit is done by appending one column to a running QR
factorization instead of refactoring; ``linalg.joint_ls`` is the reference
it is tested against.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, RankDeficientError
from .estimate import RobustEstimate
from .linalg import RANK_RTOL, joint_ls, qr_factor

SATURATION_RTOL = 1e-12


class Termination(str, Enum):
    RULE_MET = "RuleMet"
    RANK_DEFICIENT = "RankDeficient"
    TRACE_COMPLETE = "TraceComplete"


@dataclass(frozen=True)
class KnownInlierNorm:
    """Stop once ||r^k|| <= ||w||."""

    w_norm: float

    def threshold(self, n):
        return self.w_norm

    @property
    def label(self):
        return "gard(w_norm)"


@dataclass(frozen=True)
class KnownVariance:
    """Stop once ||r^k|| <= epsilon_sigma(n, sigma2)."""

    sigma2: float

    def threshold(self, n):
        return epsilon_sigma(n, self.sigma2)

    @property
    def label(self):
        return "gard(sigma2)"


@dataclass(frozen=True)
class FixedSparsity:
    """Stop after exactly k_user outliers have been flagged."""

    k_user: int

    @property
    def label(self):
        return "gard(k_user)"


@dataclass(frozen=True)
class FullTrace:
    """Run to k_max (or rank deficiency), recording every step."""

    k_max: int

    @property
    def label(self):
        return "gard(full)"


def epsilon_sigma(n, sigma2):
    """High-probability bound sigma * sqrt(n + 2 sqrt(n ln n)) on ||w||_2."""
    if n < 2:
        raise DomainError(f"epsilon_sigma needs n >= 2, got {n}")
    if sigma2 < 0:
        raise DomainError(f"sigma2 must be non-negative, got {sigma2}")
    return math.sqrt(sigma2) * math.sqrt(n + 2.0 * math.sqrt(n * math.log(n)))


@dataclass
class GardTrace:
    """Everything a GARD run produced.

    ``order`` lists flagged rows in selection order, so the support after
    step k is ``order[:k]``.  ``residual_norms[k]`` is ||r^k|| for
    k = 0..K.  ``residual_ratios[k-1]`` is RR(k); for full traces it has
    length k_max, with 1.0 padding past an early rank-deficient stop.
    ``saturated[k-1]`` marks RR(k) that were set to 0 because ||r^{k-1}||
    was already numerically zero.
    """

    order: list
    residual_norms: np.ndarray
    residual_ratios: np.ndarray
    saturated: np.ndarray
    effective_k_max: int
    termination: Termination
    k_max: int = None
    y_norm: float = 0.0
    residual: np.ndarray = field(default=None, repr=False)

    @property
    def steps(self):
        return len(self.order)

    def support_at(self, k):
        if not 0 <= k <= self.steps:
            raise DomainError(f"step {k} not in trace (0..{self.steps})")
        return tuple(self.order[:k])

    @property
    def supports(self):
        return [self.support_at(k) for k in range(self.steps + 1)]

    @property
    def final_support(self):
        return tuple(self.order)

    def k_min(self, outlier_support):
        """First step whose support covers ``outlier_support`` (inf if never)."""
        target = set(outlier_support)
        if not target:
            return 0
        seen = set()
        for k, i in enumerate(self.order, start=1):
            seen.add(i)
            if target <= seen:
                return k
        return math.inf


class _GrowingQR:
    """Thin QR of [X, e_i1, e_i2, ...] grown one identity column at a time."""

    def __init__(self, X, n_max_cols):
        n, p = X.shape
        Q0, R0 = qr_factor(X)
        self.Q = np.zeros((n, n_max_cols))
        self.Q[:, :p] = Q0
        self.m = p
        self.diag_max = float(np.max(np.abs(np.diag(R0))))

    def append_unit(self, i):
        Q = self.Q[:, : self.m]
        # Gram-Schmidt of e_i with one re-orthogonalization pass
        h = Q[i, :].copy()
        v = -(Q @ h)
        v[i] += 1.0
        h2 = Q.T @ v
        v -= Q @ h2
        rnn = float(np.linalg.norm(v))
        if rnn < RANK_RTOL * max(self.diag_max, rnn):
            raise RankDeficientError(f"row {i} column is in the span of the design", column=i)
        self.diag_max = max(self.diag_max, rnn)
        self.Q[:, self.m] = v / rnn
        self.m += 1

    def residual(self, y):
        Q = self.Q[:, : self.m]
        return y - Q @ (Q.T @ y)


def _threshold_rule(rule):
    return isinstance(rule, (KnownInlierNorm, KnownVariance))


def gard_run(problem, rule):
    """Run GARD on ``problem`` until ``rule`` is satisfied.

    Candidate rows exclude those already flagged; ties in |r| go to the
    smallest index.  Rank deficiency of the augmented design ends the run
    with ``Termination.RANK_DEFICIENT`` instead of raising.
    """
    y, X = problem.y, problem.X
    n, p = X.shape
    if isinstance(rule, FullTrace):
        if not 1 <= rule.k_max <= n - p - 1:
            raise DomainError(f"FullTrace k_max must be in [1, n-p-1={n - p - 1}], got {rule.k_max}")
        k_target = rule.k_max
    elif isinstance(rule, FixedSparsity):
        if not 0 <= rule.k_user <= n - p:
            raise DomainError(f"k_user must be in [0, n-p={n - p}], got {rule.k_user}")
        k_target = rule.k_user
    elif _threshold_rule(rule):
        k_target = n - p
        threshold = rule.threshold(n)
    else:
        raise DomainError(f"unknown stopping rule {rule!r}")

    y_norm = float(np.linalg.norm(y))
    sat_tol = SATURATION_RTOL * y_norm
    qr = _GrowingQR(X, p + k_target)
    r = qr.residual(y)
    norms = [float(np.linalg.norm(r))]
    order = []
    flagged = np.zeros(n, dtype=bool)
    termination = Termination.TRACE_COMPLETE

    if _threshold_rule(rule) and norms[0] <= threshold:
        termination = Termination.RULE_MET
    else:
        for _ in range(k_target):
            scores = np.abs(r)
            scores[flagged] = -1.0
            i = int(np.argmax(scores))
            try:
                qr.append_unit(i)
            except RankDeficientError:
                termination = Termination.RANK_DEFICIENT
                break
            flagged[i] = True
            order.append(i)
            r = qr.residual(y)
            # nested subspaces: the norm cannot grow; clip round-off
            norms.append(min(float(np.linalg.norm(r)), norms[-1]))
            if _threshold_rule(rule) and norms[-1] <= threshold:
                termination = Termination.RULE_MET
                break
        else:
            if not _threshold_rule(rule):
                termination = (Termination.TRACE_COMPLETE if isinstance(rule, FullTrace)
                               else Termination.RULE_MET)

    norms = np.asarray(norms)
    steps = len(order)
    ratio_len = rule.k_max if isinstance(rule, FullTrace) else steps
    ratios = np.ones(ratio_len)
    saturated = np.zeros(ratio_len, dtype=bool)
    for k in range(1, steps + 1):
        if norms[k - 1] <= sat_tol:
            ratios[k - 1] = 0.0
            saturated[k - 1] = True
        else:
            ratios[k - 1] = min(max(norms[k] / norms[k - 1], 0.0), 1.0)
    return GardTrace(
        order=order,
        residual_norms=norms,
        residual_ratios=ratios,
        saturated=saturated,
        effective_k_max=steps,
        termination=termination,
        k_max=rule.k_max if isinstance(rule, FullTrace) else None,
        y_norm=y_norm,
        residual=r,
    )


def residual_ratios(trace):
    """RR(k) = ||r^k|| / ||r^{k-1}||, k = 1..k_max, padded with 1.0."""
    return trace.residual_ratios.copy()


def gard_estimate(problem, rule):
    """GARD followed by a joint least-squares refit on the final support."""
    if isinstance(rule, FullTrace):
        raise DomainError("gard_estimate needs a terminating rule, not FullTrace")
    trace = gard_run(problem, rule)
    joint = joint_ls(problem, trace.final_support)
    params = {k: v for k, v in vars(rule).items()}
    method = {
        "name": "gard",
        "rule": type(rule).__name__,
        "params": params,
        "termination": trace.termination.value,
        "steps": trace.steps,
    }
    return RobustEstimate.from_joint(problem, joint, method)
