from dataclasses import dataclass, field

import numpy as np


@dataclass
class RobustEstimate:
    """Output of every estimator in the package.

    ``g_hat`` is a dense length-n vector that is zero off ``support``;
    ``residual`` is always y - X beta_hat - g_hat.  ``method`` is a plain
    dict (name, hyper-parameters, sigma_source) so it serializes as-is.
    """

    beta_hat: np.ndarray
    g_hat: np.ndarray
    support: tuple
    residual: np.ndarray
    method: dict = field(default_factory=dict)

    @classmethod
    def from_fit(cls, problem, beta_hat, g_hat=None, method=None):
        beta_hat = np.asarray(beta_hat, dtype=float)
        if g_hat is None:
            g_hat = np.zeros(problem.n)
        g_hat = np.asarray(g_hat, dtype=float)
        residual = problem.y - problem.X @ beta_hat - g_hat
        support = tuple(int(i) for i in np.flatnonzero(g_hat))
        return cls(beta_hat, g_hat, support, residual, dict(method or {}))

    @classmethod
    def from_joint(cls, problem, joint, method=None):
        g = np.zeros(problem.n)
        for i, v in joint.g_hat.items():
            g[i] = v
        est = cls.from_fit(problem, joint.beta_hat, g, method)
        # keep the support even where a fitted outlier happens to be exactly 0
        est.support = tuple(sorted(joint.g_hat))
        return est

    @property
    def robust_residual(self):
        """y - X beta_hat, the residual box plots and re-projection look at."""
        return self.residual + self.g_hat

    def to_dict(self):
        return {
            "beta_hat": [float(v) for v in self.beta_hat],
            "support": [int(i) for i in self.support],
            "g_hat": {str(int(i)): float(self.g_hat[i]) for i in self.support},
            "residual_norm": float(np.linalg.norm(self.residual)),
            "method": self.method,
        }
