"""Robust linear regression by greedy outlier pursuit with residual ratio thresholds."""

from .baselines import (SigmaEstimate, ipod_fit, lad_fit, ls_fit, m_estimate, reproject,
                        rmap_fit, sigma_scheme1, sigma_scheme2)
from .errors import CapacityError, ConvergenceError, DomainError, RankDeficientError
from .estimate import RobustEstimate
from .gard import (FixedSparsity, FullTrace, GardTrace, KnownInlierNorm, KnownVariance,
                   Termination, epsilon_sigma, gard_estimate, gard_run, residual_ratios)
from .linalg import JointEstimate, RegressionProblem, Truth, joint_ls
from .numerics import beta_cdf, beta_inv_cdf, log_beta
from .rrt import RrtConfig, rrt_gard, rrt_gard_multi, rrt_threshold_table, select_k_rrt

__all__ = [
    "CapacityError", "ConvergenceError", "DomainError", "FixedSparsity", "FullTrace",
    "GardTrace", "JointEstimate", "KnownInlierNorm", "KnownVariance", "RankDeficientError",
    "RegressionProblem", "RobustEstimate", "RrtConfig", "SigmaEstimate", "Termination", "Truth",
    "beta_cdf", "beta_inv_cdf", "epsilon_sigma", "gard_estimate", "gard_run", "ipod_fit",
    "joint_ls", "lad_fit", "log_beta", "ls_fit", "m_estimate", "reproject", "residual_ratios",
    "rmap_fit", "rrt_gard", "rrt_gard_multi", "rrt_threshold_table", "select_k_rrt",
    "sigma_scheme1", "sigma_scheme2",
]
