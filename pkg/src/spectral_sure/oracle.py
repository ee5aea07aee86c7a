"""Monte Carlo and finite-difference ground truth.

Everything here is seeded through :func:`spectral_sure._rng.replicate_rng`;
replicate ``b`` always sees the same noise regardless of ``threads``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._rng import NOISE_STREAM, SMOOTHING_STREAM, replicate_rng
from .spectral import svd, truncate_rank

EstimatorHandle = Callable[[np.ndarray], np.ndarray]

MIN_REPS = 100


@dataclass(frozen=True)
class McResult:
    estimate: float
    std_error: float
    reps: int
    seed: int

    CSV_HEADER = "estimate,std_error,reps,seed"

    def to_csv_row(self) -> str:
        return f"{self.estimate:.17g},{self.std_error:.17g},{self.reps},{self.seed}"

    @classmethod
    def from_samples(cls, values, seed: int) -> "McResult":
        values = np.asarray(values, dtype=float)
        se = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        return cls(float(values.mean()), se, int(values.size), int(seed))


def _map(fn, reps, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, range(reps)))
    return [fn(b) for b in range(reps)]


def noise(shape, tau: float, seed: int, b: int) -> np.ndarray:
    """Noise matrix of replicate b: tau * N(0, 1) entries."""
    return tau * replicate_rng(seed, b, NOISE_STREAM).standard_normal(shape)


def true_df_mc(est: EstimatorHandle, Mstar, tau: float, reps: int, seed: int,
               threads: int = 1) -> McResult:
    """Monte Carlo df = sum_ij Cov(fit_ij, Y_ij) / tau^2 with Y = M* + tau G.

    Replicate statistic: <fit(Y_b) - fit(M*), eps_b> / tau^2.  Centring on the
    noiseless fit leaves the mean unbiased (eps has mean zero) and removes
    most of the variance.
    """
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}")
    Mstar = np.asarray(Mstar, dtype=float)
    center = np.asarray(est(Mstar), dtype=float)

    def one(b):
        eps = noise(Mstar.shape, tau, seed, b)
        fit = np.asarray(est(Mstar + eps), dtype=float)
        return float(np.sum((fit - center) * eps)) / tau**2

    return McResult.from_samples(_map(one, reps, threads), seed)


def true_mse_mc(est: EstimatorHandle, Mstar, tau: float, reps: int, seed: int,
                threads: int = 1, target=None) -> McResult:
    """Monte Carlo E||fit(Y) - target||_F^2 (target defaults to M*)."""
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}")
    Mstar = np.asarray(Mstar, dtype=float)
    target = Mstar if target is None else np.asarray(target, dtype=float)

    def one(b):
        fit = np.asarray(est(Mstar + noise(Mstar.shape, tau, seed, b)), dtype=float)
        return float(np.sum((fit - target) ** 2))

    return McResult.from_samples(_map(one, reps, threads), seed)


def fd_divergence(est: EstimatorHandle, Y, step: Optional[float] = None) -> float:
    """Central finite-difference divergence sum_ij d fit_ij / d Y_ij.

    Default step is 1e-6 * max(1, |Y_ij|) per entry.  Meaningless across a
    discontinuity of ``est``.
    """
    Y = np.asarray(Y, dtype=float)
    total = 0.0
    for idx in np.ndindex(*Y.shape):
        h = step if step is not None else 1e-6 * max(1.0, abs(Y[idx]))
        Yp = Y.copy()
        Ym = Y.copy()
        Yp[idx] += h
        Ym[idx] -= h
        total += (np.asarray(est(Yp))[idx] - np.asarray(est(Ym))[idx]) / (2 * h)
    return float(total)


def forward_fd_divergence(est: EstimatorHandle, Y, step: float = 1e-7) -> float:
    """One-sided (t -> 0+) version of :func:`fd_divergence`."""
    Y = np.asarray(Y, dtype=float)
    base = np.asarray(est(Y))
    total = 0.0
    for idx in np.ndindex(*Y.shape):
        Yp = Y.copy()
        Yp[idx] += step
        total += (np.asarray(est(Yp))[idx] - base[idx]) / step
    return float(total)


def _gaussian_draws(shape, seed, b, draws):
    rng = replicate_rng(seed, b, SMOOTHING_STREAM)
    return [rng.standard_normal(shape) for _ in range(draws)]


def smooth_truncate(Y, K: int, h: float, draws: int, seed: int) -> np.ndarray:
    """Monte Carlo g_h(Y) = E_Z C_K(Y + h Z).

    The draws depend only on ``seed``, so sweeps over ``h`` share random numbers.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    Y = np.asarray(Y, dtype=float)
    acc = np.zeros_like(Y)
    for Z in _gaussian_draws(Y.shape, seed, 0, draws):
        acc += truncate_rank(svd(Y + h * Z), K)
    return acc / draws


def df_smoothed_truncate_mc(Mstar, tau: float, K: int, h: float, reps: int, draws: int,
                            seed: int, threads: int = 1) -> McResult:
    """Monte Carlo df of the Gaussian-smoothed truncation g_h.

    Statistic per replicate: mean over draws of
    sum_ij (C_K(Y + hZ) - C_K(Y))_ij Z_ij / h.
    """
    if reps < 1 or draws < 1:
        raise ValueError("reps and draws must be >= 1")
    Mstar = np.asarray(Mstar, dtype=float)

    def one(b):
        Y = Mstar + noise(Mstar.shape, tau, seed, b)
        base = truncate_rank(svd(Y), K)
        vals = [float(np.sum((truncate_rank(svd(Y + h * Z), K) - base) * Z)) / h
                for Z in _gaussian_draws(Y.shape, seed, b, draws)]
        return float(np.mean(vals))

    return McResult.from_samples(_map(one, reps, threads), seed)


# ---------------------------------------------------------------------------
# replicate summaries for sweeping spectral estimators over a theta grid
# ---------------------------------------------------------------------------

@dataclass
class SpectralReplicates:
    """Per-replicate projections that make every spectral fit O(n) to score.

    For replicate b with reduced data Q_b = U_b diag(sigma_b) V_b':
      noise_proj[b, k]  = u_k' E_b v_k          (E_b: reduced noise)
      signal_proj[b, k] = u_k' M v_k             (M: reduced signal)
      center_proj[b, k] = u*_k' E_b v*_k         (singular vectors of M)
    so <S(Q_b) - S(M), E_b> = sum s(sigma) noise_proj - sum s(sigma*) center_proj
    and ||S(Q_b) - M||^2 = sum s^2 - 2 sum s signal_proj + ||M||^2.
    """

    sigma: np.ndarray
    noise_proj: np.ndarray
    signal_proj: np.ndarray
    center_proj: np.ndarray
    perp_resid: np.ndarray
    signal_sigma: np.ndarray
    signal_norm2: float
    gap: int
    size: int
    tau: float
    seed: int

    @property
    def reps(self) -> int:
        return self.sigma.shape[0]


def _diag_proj(u, A, v) -> np.ndarray:
    """Diagonal of u' A v."""
    return np.sum(u * (A @ v), axis=0)


def spectral_replicates(Mstar, tau: float, reps: int, seed: int, design_basis=None,
                        stream: int = NOISE_STREAM, threads: int = 1,
                        start: int = 0) -> SpectralReplicates:
    """Draw ``reps`` noisy observations and reduce each to spectral summaries.

    Additive model: Y = M* + E.  With ``design_basis`` U (orthonormal columns
    of the design), ``Mstar`` is the mean response X M* and the estimator acts
    on Q = U'Y; noise is drawn at full m x n size before projection.
    Replicate indices run from ``start`` to ``start + reps - 1``.
    """
    Mstar = np.asarray(Mstar, dtype=float)
    U = None if design_basis is None else np.asarray(design_basis, dtype=float)
    M = Mstar if U is None else U.T @ Mstar
    sig_dec = svd(M)
    Us, Vs = sig_dec.U, sig_dec.V
    if sig_dec.transposed:
        Us, Vs = Vs, Us

    def one(b):
        eps = tau * replicate_rng(seed, b, stream).standard_normal(Mstar.shape)
        if U is None:
            E = eps
            perp = 0.0
        else:
            E = U.T @ eps
            Y = Mstar + eps
            Q = U.T @ Y
            perp = float(np.sum(Y * Y) - np.sum(Q * Q))
        Q = M + E
        u, s, vt = np.linalg.svd(Q, full_matrices=False)
        v = vt.T
        return s, _diag_proj(u, E, v), _diag_proj(u, M, v), _diag_proj(Us, E, Vs), perp

    rows = _map(lambda b: one(start + b), reps, threads)
    k = min(M.shape)
    return SpectralReplicates(
        sigma=np.vstack([r[0] for r in rows]),
        noise_proj=np.vstack([r[1] for r in rows]),
        signal_proj=np.vstack([r[2] for r in rows]),
        center_proj=np.vstack([r[3] for r in rows]),
        perp_resid=np.array([r[4] for r in rows]),
        signal_sigma=sig_dec.sigma[:k].copy(),
        signal_norm2=float(np.sum(M * M)),
        gap=abs(M.shape[0] - M.shape[1]),
        size=int(Mstar.size),
        tau=float(tau),
        seed=int(seed),
    )


def sweep_truth(data: SpectralReplicates, shrink: Callable[[np.ndarray], np.ndarray]):
    """(df, mse) McResults of the spectral estimator with singular-value rule ``shrink``."""
    s = np.asarray(shrink(data.sigma), dtype=float)
    s_center = np.asarray(shrink(data.signal_sigma), dtype=float)
    df_stat = ((s * data.noise_proj).sum(axis=1) - data.center_proj @ s_center) / data.tau**2
    mse_stat = (s * s).sum(axis=1) - 2 * (s * data.signal_proj).sum(axis=1) + data.signal_norm2
    return McResult.from_samples(df_stat, data.seed), McResult.from_samples(mse_stat, data.seed)
