"""Unbiased degrees-of-freedom estimators and the SURE risk assembly.

The public estimators take one :class:`~spectral_sure.spectral.SvdDecomposition`.
The ``*_kernel`` helpers underneath work on the last axis of arrays of
singular values, so the simulation harness can evaluate thousands of
replicates at once with exactly the same arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import penalty as pen
from .errors import (
    AtKinkError,
    MissingDensityError,
    NotApplicableError,
    RepeatedSingularValuesError,
    ShapeMismatchError,
    TiedAtCutError,
)
from .penalty import Family, PenaltySpec
from .spectral import GROUP_TOL, SvdDecomposition, check_simple


@dataclass(frozen=True)
class DfComponents:
    deriv_term: float = 0.0
    shape_term: float = 0.0
    cross_term: float = 0.0
    zero_block_term: float = 0.0
    density_term: float = 0.0

    def total(self) -> float:
        return (self.deriv_term + self.shape_term + self.cross_term
                + self.zero_block_term + self.density_term)


@dataclass(frozen=True)
class DfEstimate:
    """A df value with its additive breakdown.

    ``value`` is always the sum of ``components``.
    """

    components: DfComponents
    applicable: bool = True
    reason: str = ""
    value: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value", self.components.total())

    @property
    def value_without_density(self) -> float:
        """The naive divergence, i.e. the estimate with the density correction dropped."""
        return self.value - self.components.density_term

    def __float__(self):
        return float(self.value)


class DensityProvider:
    """Per-index marginal densities of the ordered singular values.

    ``evaluators[i](x)`` estimates the density of the (i+1)-th largest
    singular value at ``x``.
    """

    KDE_FROM_REPLICATES = "KdeFromReplicates"
    USER_SUPPLIED = "UserSupplied"

    def __init__(self, evaluators: Sequence[Callable], provenance: str = USER_SUPPLIED):
        self.evaluators = list(evaluators)
        self.provenance = provenance

    def __len__(self):
        return len(self.evaluators)

    def __call__(self, i: int, x):
        return self.evaluators[i](x)

    def at(self, x: float) -> np.ndarray:
        """Densities of all indices at a single point."""
        return np.array([float(np.asarray(ev(x))) for ev in self.evaluators])

    @classmethod
    def constant(cls, n: int, value: float = 0.0) -> "DensityProvider":
        return cls([lambda x, v=value: np.zeros_like(np.asarray(x, float)) + v] * n)


# ---------------------------------------------------------------------------
# batched kernels (last axis = singular values, sorted nonincreasing)
# ---------------------------------------------------------------------------

def inverse_gap_sums(sigma: np.ndarray) -> np.ndarray:
    """r_i = sum_{j != i} 1 / (sigma_i^2 - sigma_j^2) along the last axis."""
    s2 = np.asarray(sigma, float) ** 2
    den = s2[..., :, None] - s2[..., None, :]
    n = s2.shape[-1]
    eye = np.eye(n, dtype=bool)
    den = np.where(eye, 1.0, den)
    inv = np.where(eye, 0.0, 1.0 / den)
    return inv.sum(axis=-1)


def spectral_df_kernel(sigma, shrunk, slope, gap: int, rsum=None):
    """Terms of the spectral df formula, batched over leading axes.

    Returns (deriv, shape, cross) where cross = 2 sum_{i != j} sigma_i s_i /
    (sigma_i^2 - sigma_j^2), computed as 2 sum_i sigma_i s_i r_i.
    """
    sigma = np.asarray(sigma, float)
    if rsum is None:
        rsum = inverse_gap_sums(sigma)
    deriv = slope.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sigma > 0, shrunk / np.where(sigma > 0, sigma, 1.0), 0.0)
    shape = gap * ratio.sum(axis=-1)
    cross = 2.0 * (sigma * shrunk * rsum).sum(axis=-1)
    return deriv, shape, cross


def reduced_rank_cross(sigma, K: int):
    """2 sum_{i<=K} sum_{j>K} sigma_j^2 / (sigma_i^2 - sigma_j^2), batched."""
    s2 = np.asarray(sigma, float) ** 2
    top = s2[..., :K, None]
    bot = s2[..., None, K:]
    return 2.0 * (bot / (top - bot)).sum(axis=(-2, -1))


def sure(residual_sq, df_value, tau: float, size: int):
    """-tau^2 N + ||fit - Y||^2 + 2 tau^2 df (vectorised)."""
    return -tau**2 * size + residual_sq + 2 * tau**2 * df_value


# ---------------------------------------------------------------------------
# single-realisation estimators
# ---------------------------------------------------------------------------

def _require_simple(dec: SvdDecomposition):
    try:
        check_simple(dec.sigma)
    except RepeatedSingularValuesError as exc:
        raise RepeatedSingularValuesError(
            f"{exc}; the df formula needs distinct positive singular values "
            "(perturb by ~1e-10 * sigma_1 if this is a constructed input)"
        ) from None


def df_spectral(dec: SvdDecomposition, spec: PenaltySpec) -> DfEstimate:
    """Unbiased df of the spectral estimator S_theta(Y) for a Stein-applicable penalty."""
    if not pen.stein_applicable(spec, warn=True):
        raise NotApplicableError(
            f"{spec.label} at theta={spec.theta:g} has concavity bound "
            f"{pen.concavity_bound(spec):g}; the spectral df formula needs phi_P + 1 > 0"
        )
    _require_simple(dec)
    s = dec.sigma
    shrunk = np.asarray(pen.prox(spec, s))
    slope = np.asarray(pen.prox_derivative(spec, s))
    deriv, shape, cross = spectral_df_kernel(s, shrunk, slope, dec.m - dec.n)
    return DfEstimate(DfComponents(float(deriv), float(shape), float(cross)))


def _jump_df(dec: SvdDecomposition, spec: PenaltySpec, density: Optional[DensityProvider]):
    if density is None:
        raise MissingDensityError("a DensityProvider is required for discontinuous thresholding")
    if len(density) < dec.n:
        raise MissingDensityError(f"density provides {len(density)} indices, need {dec.n}")
    check_simple(dec.sigma, allow_zero=True)
    s = dec.sigma
    if np.any(pen.near_kink(spec, s)):
        raise AtKinkError("a singular value sits on the thresholding jump")
    shrunk = np.asarray(pen.prox(spec, s))
    slope = np.asarray(pen.one_sided_derivative(spec, s, "right"))
    deriv, shape, cross = spectral_df_kernel(s, shrunk, slope, dec.m - dec.n)
    jump = pen.discontinuity(spec)
    dens = 0.0
    if jump is not None:
        fvals = density.at(jump.location)[: dec.n]
        if np.any(fvals < 0):
            raise MissingDensityError("density evaluator returned a negative value")
        dens = jump.jump_height * float(fvals.sum())
    return DfEstimate(DfComponents(float(deriv), float(shape), float(cross), 0.0, dens))


def df_rank_regularized(dec: SvdDecomposition, theta: float, density: Optional[DensityProvider]) -> DfEstimate:
    """df of hard singular-value thresholding at sqrt(2 theta), density-corrected."""
    return _jump_df(dec, PenaltySpec.rank(theta), density)


def df_bridge(dec: SvdDecomposition, theta: float, q: float, density: Optional[DensityProvider]) -> DfEstimate:
    """Unified df for the penalty theta |x|^q, 0 <= q <= 1.

    q = 0 is the rank penalty and q = 1 the nuclear norm (no density term).
    """
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if q == 1:
        est = df_spectral(dec, PenaltySpec.nuclear(theta))
        return est
    return _jump_df(dec, PenaltySpec.bridge(theta, q), density)


def df_reduced_rank(dec: SvdDecomposition, K: int, tol: float = GROUP_TOL) -> DfEstimate:
    """df of the best rank-K approximation C_K(Y)."""
    m, n = dec.m, dec.n
    if not 0 <= K <= n:
        raise ValueError(f"K must lie in [0, {n}]")
    if K == 0:
        return DfEstimate(DfComponents())
    if K == n:
        return DfEstimate(DfComponents(deriv_term=float(n), shape_term=float((m - n) * n),
                                       cross_term=float(n * (n - 1))))
    s = dec.sigma
    if s[K - 1] - s[K] <= tol * max(1.0, s[0]):
        raise TiedAtCutError(
            f"sigma_K == sigma_(K+1) (K={K}); the reduced-rank estimator is discontinuous there"
        )
    cross = K * (K - 1) + 2 * K * (n - K) + float(reduced_rank_cross(s, K))
    return DfEstimate(DfComponents(deriv_term=float(K), shape_term=float((m - n) * K),
                                   cross_term=float(cross)))


def df_estimate(dec: SvdDecomposition, spec: PenaltySpec,
                density: Optional[DensityProvider] = None) -> DfEstimate:
    """Dispatch to the right estimator for ``spec``."""
    kind = spec.kind
    if kind is Family.RANK:
        if spec.theta == 0:
            return df_reduced_rank(dec, dec.n)
        return df_rank_regularized(dec, spec.theta, density)
    if kind is Family.BRIDGE:
        if spec.theta == 0:
            return df_reduced_rank(dec, dec.n)
        return df_bridge(dec, spec.theta, spec.q, density)
    return df_spectral(dec, spec)


def sure_risk(Y, fit, df_value: float, tau: float) -> float:
    """Stein's unbiased estimate of E||fit - M*||_F^2."""
    Y = np.asarray(Y, float)
    fit = np.asarray(fit, float)
    if Y.shape != fit.shape:
        raise ShapeMismatchError(f"shape mismatch {Y.shape} vs {fit.shape}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    resid = float(np.sum((fit - Y) ** 2))
    return float(sure(resid, float(df_value), tau, Y.size))


def rank_threshold(theta: float) -> float:
    return math.sqrt(2 * theta)
