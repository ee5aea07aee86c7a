"""Multivariate linear regression Y = X M + E reduced to the additive model.

With the compact SVD X = U diag(d) V', every fit here is U S(U'Y) for a
spectral map S, and its df equals the additive-model df of S at Q = U'Y.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import df as dfm
from .df import DensityProvider, DfComponents, DfEstimate
from .errors import ShapeMismatchError, TiedAtCutError
from .penalty import PenaltySpec
from .spectral import GROUP_TOL, svd, truncate_rank, apply_spectral
from . import penalty as pen

RANK_TOL = 1e-10


@dataclass(frozen=True)
class DesignFactorization:
    X: np.ndarray
    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray

    @property
    def r(self) -> int:
        return self.Sigma.size

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_design(cls, X, rank_tol: float = RANK_TOL) -> "DesignFactorization":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.size == 0:
            raise ShapeMismatchError("design must be a nonempty matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("design contains non-finite entries")
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
        return cls(X, u[:, keep], s[keep], vt[keep].T)

    def project(self, Y) -> np.ndarray:
        """Q = U'Y, the r x n reduced response."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != self.m:
            raise ShapeMismatchError(f"response has {np.shape(Y)}, design has {self.m} rows")
        return self.U.T @ Y

    def coefficient(self, fitted) -> Optional[np.ndarray]:
        """(X'X)^+ X' fitted when the coefficient is unique (r = p < m)."""
        if not (self.r == self.p < self.m):
            return None
        return self.V @ ((self.U.T @ fitted) / self.Sigma[:, None])


@dataclass(frozen=True)
class RegressionFit:
    fitted: np.ndarray
    df: DfEstimate
    coefficient: Optional[np.ndarray] = None


def least_squares_fit(fact: DesignFactorization, Y) -> np.ndarray:
    return fact.U @ fact.project(Y)


def df_reduced_rank_regression(fact: DesignFactorization, Y, K: int) -> DfEstimate:
    """df of M_K by delegation to the additive estimator on Q = U'Y."""
    return dfm.df_reduced_rank(svd(fact.project(Y)), min(K, min(fact.r, np.shape(Y)[1])))


def reduced_rank_regression(fact: DesignFactorization, Y, K: int) -> RegressionFit:
    if K < 1:
        raise ValueError("K must be >= 1")
    dec = svd(fact.project(Y))
    k = min(K, dec.n)
    fitted = fact.U @ truncate_rank(dec, k)
    df = dfm.df_reduced_rank(dec, k)
    return RegressionFit(fitted, df, fact.coefficient(fitted))


def spectral_regression(fact: DesignFactorization, Y, spec: PenaltySpec,
                        density: Optional[DensityProvider] = None) -> RegressionFit:
    """Fitted value U S_theta(U'Y) with its df; |r - n| replaces (m - n)."""
    dec = svd(fact.project(Y))
    fitted = fact.U @ apply_spectral(dec, lambda s: pen.prox(spec, s))
    df = dfm.df_estimate(dec, spec, density)
    return RegressionFit(fitted, df, fact.coefficient(fitted))


# ---------------------------------------------------------------------------
# the same formulas evaluated directly on the spectrum of the LS fit
# ---------------------------------------------------------------------------

def fitted_spectrum(fact: DesignFactorization, Y) -> np.ndarray:
    """Leading min(r, n) singular values of the least-squares fit UU'Y."""
    Yhat = least_squares_fit(fact, Y)
    k = min(fact.r, Yhat.shape[1])
    return np.linalg.svd(Yhat, compute_uv=False)[:k]


def df_reduced_rank_from_fit(fact: DesignFactorization, Y, K: int, tol: float = GROUP_TOL) -> float:
    """(r+n-K)K + 2 sum_{i<=K<j} s_j^2/(s_i^2 - s_j^2) on the LS fit; rn when K >= min(r,n)."""
    r, n = fact.r, np.shape(Y)[1]
    if K >= min(r, n):
        return float(r * n)
    s = fitted_spectrum(fact, Y)
    if s[K - 1] - s[K] <= tol * max(1.0, s[0]):
        raise TiedAtCutError("tie at the cut")
    return float((r + n - K) * K + dfm.reduced_rank_cross(s, K))


def df_spectral_from_fit(fact: DesignFactorization, Y, spec: PenaltySpec,
                         density: Optional[DensityProvider] = None) -> float:
    """Spectral df on the LS fit's spectrum with |r - n| as the shape factor."""
    n = np.shape(Y)[1]
    s = fitted_spectrum(fact, Y)
    gap = abs(fact.r - n)
    shrunk = np.asarray(pen.prox(spec, s))
    jump = pen.discontinuity(spec)
    if spec.theta > 0 and spec.kind in (pen.Family.BRIDGE, pen.Family.RANK):
        slope = np.asarray(pen.one_sided_derivative(spec, s, "right"))
    else:
        slope = np.asarray(pen.prox_derivative(spec, s))
    deriv, shape, cross = dfm.spectral_df_kernel(s, shrunk, slope, gap)
    total = float(deriv + shape + cross)
    if jump is not None:
        total += jump.jump_height * float(density.at(jump.location)[: s.size].sum())
    return total
