"""Spectral-regularised low-rank estimation with unbiased df and SURE."""
from .penalty import Family, PenaltySpec, prox
from .spectral import SvdDecomposition, svd, truncate_rank, apply_spectral, divergence
from .df import DensityProvider, DfEstimate, df_estimate, df_reduced_rank, sure_risk
from .oracle import McResult, true_df_mc, true_mse_mc, fd_divergence

__version__ = "0.1.0"

__all__ = [
    "Family", "PenaltySpec", "prox", "SvdDecomposition", "svd", "truncate_rank",
    "apply_spectral", "divergence", "DensityProvider", "DfEstimate", "df_estimate",
    "df_reduced_rank", "sure_risk", "McResult", "true_df_mc", "true_mse_mc", "fd_divergence",
    "__version__",
]
