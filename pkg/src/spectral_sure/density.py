"""Marginal densities of ordered singular values.

Kernel density estimates over replicate singular values back the density
correction of the discontinuous (Bridge/Rank) df formulas.  The central
Wishart eigenvalue density is kept as a diagnostic only.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import replicate_rng
from .df import DensityProvider
from .errors import DegenerateSampleError, SpectralSureError

BOOTSTRAP_STREAM = 3
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SingularValueSamples:
    """reps x n array; row b holds the ordered singular values of replicate b."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2:
            raise ValueError("samples must be a reps x n array")
        if np.any(arr < 0) or np.any(np.diff(arr, axis=1) > 0):
            raise ValueError("each row must be nonnegative and nonincreasing")
        object.__setattr__(self, "samples", arr)

    @property
    def reps(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.samples, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "SingularValueSamples":
        return cls(np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float)))


def wishart_eigen_logdensity_unnormalized(lam, m: int, n: int, tau: float) -> float:
    """Log of the unnormalised joint eigenvalue density of a central Wishart matrix.

    sum(-lam/(2 tau)) + (m-n-1)/2 sum(log lam) + sum_{a<b} log(lam_a - lam_b).
    The exp(-lam/(2 tau)) scaling is kept exactly as written in the source
    derivation, where tau appears in place of the usual variance tau^2.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n,):
        raise ValueError(f"expected {n} eigenvalues, got shape {lam.shape}")
    if m < n:
        raise ValueError("requires m >= n")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be nonincreasing")
    gaps = lam[:, None] - lam[None, :]
    iu = np.triu_indices(n, 1)
    g = gaps[iu]
    if np.any(g == 0):
        return -math.inf
    return float(-lam.sum() / (2 * tau) + (m - n - 1) / 2 * np.log(lam).sum() + np.log(g).sum())


def silverman_bandwidth(samples) -> float:
    """0.9 min(sd, IQR/1.34) len^(-1/5); falls back to sd when the IQR is 0."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateSampleError("need at least two samples")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DegenerateSampleError("sample has zero spread")
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde_eval(samples, bandwidth: float, x):
    """Gaussian KDE (1/(len h)) sum phi((x - s_b)/h), vectorised over x."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise DegenerateSampleError("empty sample")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    xv = np.asarray(x, dtype=float)
    z = (xv[..., None] - s) / bandwidth
    out = np.exp(-0.5 * z * z).sum(axis=-1) * (_INV_SQRT_2PI / (s.size * bandwidth))
    return float(out) if np.ndim(x) == 0 else out


def _bootstrap_one(signal, tau, seed, b):
    rng = replicate_rng(seed, b, BOOTSTRAP_STREAM)
    Y = signal + tau * rng.standard_normal(signal.shape)
    return np.linalg.svd(Y, compute_uv=False)


def bootstrap_singular_value_samples(signal_estimate, tau: float, reps: int, seed: int,
                                     threads: int = 1) -> SingularValueSamples:
    """Ordered singular values of signal + tau G_b for b = 0..reps-1.

    Replicate b draws from its own stream keyed on (seed, b), so the output
    does not depend on ``threads``.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    signal = np.asarray(signal_estimate, dtype=float)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda b: _bootstrap_one(signal, tau, seed, b), range(reps)))
    else:
        rows = [_bootstrap_one(signal, tau, seed, b) for b in range(reps)]
    return SingularValueSamples(np.vstack(rows))


class _ColumnKde:
    def __init__(self, column):
        self.samples = np.ascontiguousarray(column, dtype=float)
        self.bandwidth = silverman_bandwidth(self.samples)

    def __call__(self, x):
        return kde_eval(self.samples, self.bandwidth, x)


def density_provider_from_samples(s: SingularValueSamples) -> DensityProvider:
    """One Silverman-bandwidth KDE per singular-value index."""
    evaluators = []
    for i in range(s.n):
        try:
            evaluators.append(_ColumnKde(s.samples[:, i]))
        except DegenerateSampleError as exc:
            raise DegenerateSampleError(f"column {i}: {exc}") from None
    return DensityProvider(evaluators, DensityProvider.KDE_FROM_REPLICATES)


def kde_matrix(samples: np.ndarray, x) -> np.ndarray:
    """Densities of every column of ``samples`` at each point of ``x``.

    Returns an array of shape (len(x), n).  Same arithmetic as
    :func:`density_provider_from_samples` but evaluated in bulk.
    """
    samples = np.asarray(samples, float)
    bw = np.array([silverman_bandwidth(samples[:, i]) for i in range(samples.shape[1])])
    xv = np.atleast_1d(np.asarray(x, float))
    out = np.empty((xv.size, samples.shape[1]))
    for k, t in enumerate(xv):
        z = (t - samples) / bw
        out[k] = np.exp(-0.5 * z * z).sum(axis=0) * (_INV_SQRT_2PI / (samples.shape[0] * bw))
    return out


def plugin_density_provider(fit, tau: float, reps: int = 1000, seed: int = 0,
                            threads: int = 1) -> DensityProvider:
    """KDE provider from a parametric bootstrap around ``fit``."""
    samples = bootstrap_singular_value_samples(fit, tau, reps, seed, threads)
    try:
        return density_provider_from_samples(samples)
    except DegenerateSampleError as exc:
        raise SpectralSureError(f"bootstrap density failed: {exc}") from None
