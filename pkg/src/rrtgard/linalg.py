"""Dense least-squares kernels for the outlier-augmented regression model.

Everything here works on the augmented design [X, I_S], where I_S holds
the identity columns of the rows flagged as outliers.  ``joint_ls`` factors
that matrix from scratch on every call; it is deliberately the slow,
obviously-correct path that the incremental GARD loop is checked against.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import CapacityError, DomainError, RankDeficientError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Truth:
    """Ground truth attached to synthetic problems."""

    beta: np.ndarray
    outlier_support: tuple
    outlier_values: np.ndarray
    sigma2: float
    noise: Optional[np.ndarray] = None

    @property
    def g_out(self):
        return self.outlier_values

    @property
    def support_set(self):
        return frozenset(self.outlier_support)


@dataclass(frozen=True)
class RegressionProblem:
    """y = X beta + w + g_out, optionally with the generating truth."""

    y: np.ndarray
    X: np.ndarray
    truth: Optional[Truth] = field(default=None, repr=False)
    check_rank: bool = field(default=True, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DomainError(f"shape mismatch: y {y.shape}, X {X.shape}")
        n, p = X.shape
        if not n > p >= 1:
            raise DomainError(f"need n > p >= 1, got n={n}, p={p}")
        if self.check_rank:
            s = np.linalg.svd(X, compute_uv=False)
            if s[-1] <= RANK_RTOL * s[0]:
                raise RankDeficientError("design matrix is not full column rank")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def blind(self):
        """The same data with the truth block removed."""
        if self.truth is None:
            return self
        return replace(self, truth=None, check_rank=False)


@dataclass
class JointEstimate:
    beta_hat: np.ndarray
    g_hat: dict
    residual: np.ndarray
    residual_norm: float

    def g_vector(self, n):
        g = np.zeros(n)
        for i, v in self.g_hat.items():
            g[i] = v
        return g


def _check_r_diag(R, offset=0):
    d = np.abs(np.diag(R))
    if d.size == 0:
        return
    bad = np.flatnonzero(d < RANK_RTOL * d.max())
    if bad.size:
        raise RankDeficientError(
            f"matrix is rank deficient at column {offset + bad[0]}", column=int(bad[0]))


def qr_factor(X):
    """Thin QR of a full-column-rank matrix; raises RankDeficientError otherwise."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise DomainError(f"expected a tall matrix, got shape {X.shape}")
    Q, R = np.linalg.qr(X, mode="reduced")
    _check_r_diag(R)
    return Q, R


def augmented(X, support):
    n = X.shape[0]
    support = list(support)
    E = np.zeros((n, len(support)))
    E[support, np.arange(len(support))] = 1.0
    return np.hstack([X, E])


def joint_ls(problem, support=()):
    """Least-squares fit of y on [X, I_S].

    Returns beta_hat, the outlier estimates on ``support`` (keyed by row
    index), and the residual (I - P_A) y.  Identity columns are taken in
    row order, so the same set always gives bit-identical results.
    """
    y, X = problem.y, problem.X
    support = [int(i) for i in support]
    if len(set(support)) != len(support):
        raise DomainError("support contains duplicate indices")
    support.sort()
    if support and (min(support) < 0 or max(support) >= problem.n):
        raise DomainError("support index out of range")
    A = augmented(X, support)
    if A.shape[1] > A.shape[0]:
        raise RankDeficientError("augmented matrix has more columns than rows")
    Q, R = qr_factor(A)
    coef = np.linalg.solve(R, Q.T @ y) if R.size else np.zeros(0)
    residual = y - Q @ (Q.T @ y)
    p = X.shape[1]
    g_hat = {int(i): float(v) for i, v in zip(support, coef[p:])}
    return JointEstimate(coef[:p].copy(), g_hat, residual, float(np.linalg.norm(residual)))


def delta_subset(Q, S):
    """Cosine of the smallest principal angle between span(Q) and span(I_S).

    Equal to the largest singular value of the row block Q[S, :].
    """
    S = list(S)
    if not S:
        raise DomainError("delta_subset needs a non-empty index set")
    block = np.asarray(Q)[S, :]
    val = float(np.linalg.norm(block, 2))
    return min(max(val, 0.0), 1.0)


def delta_kg_bruteforce(Q, k_g, max_n=25, max_k=3):
    """Exhaustive delta_{k_g}: minimum of delta_subset over all k_g-subsets.

    Also returns the per-subset map so callers can read delta at a
    particular subset (e.g. the true outlier support).
    """
    Q = np.asarray(Q)
    n = Q.shape[0]
    if n > max_n or k_g > max_k:
        raise CapacityError(f"brute force limited to n <= {max_n}, k_g <= {max_k}")
    if k_g < 1:
        raise DomainError("k_g must be >= 1")
    delta_at = {S: delta_subset(Q, S) for S in combinations(range(n), k_g)}
    return min(delta_at.values()), delta_at
