"""Seeded data generators and df/risk curve experiments.

A run draws two independent replicate sets: a large one for the Monte Carlo
truth and a smaller one on which the unbiased estimators are averaged.  Each
replicate is reduced once to spectral summaries (see
:class:`spectral_sure.oracle.SpectralReplicates`), after which every theta
costs O(reps * n) work.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import df as dfm
from . import penalty as pen
from ._rng import DESIGN_STREAM, ESTIMATE_STREAM, NOISE_STREAM, SIGNAL_STREAM, replicate_rng
from .density import kde_matrix
from .errors import NotApplicableError, SpectralSureError
from .oracle import McResult, SpectralReplicates, spectral_replicates, sweep_truth
from .penalty import Family, PenaltySpec
from .regression import DesignFactorization

ADDITIVE = "additive"
REGRESSION = "regression"


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_lowrank_signal(n: int, weights: Sequence[float], seed: int) -> np.ndarray:
    """sum_k w_k u_k u_k' with u_k entries iid N(0, sd = n^(-1/4))."""
    weights = list(weights)
    if not weights:
        raise ValueError("weights must be nonempty")
    rng = replicate_rng(seed, 0, SIGNAL_STREAM)
    u = rng.standard_normal((n, len(weights))) * n ** -0.25
    return (u * np.asarray(weights, float)) @ u.T


def toeplitz_covariance(m: int, p: int) -> np.ndarray:
    """Sigma_ij = 1 / (2^|i-j| m), p x p."""
    idx = np.arange(p)
    return 0.5 ** np.abs(idx[:, None] - idx[None, :]) / m


def gen_toeplitz_design(m: int, p: int, seed: int) -> np.ndarray:
    """m x p design with iid N(0, Sigma) rows via the Cholesky factor of Sigma."""
    if m < 1 or p < 1:
        raise ValueError("m and p must be positive")
    L = np.linalg.cholesky(toeplitz_covariance(m, p))
    return replicate_rng(seed, 0, DESIGN_STREAM).standard_normal((m, p)) @ L.T


def make_signal(recipe: str, m: int, n: int, seed: int) -> np.ndarray:
    """``lowrank:w1,w2,...`` (square, n x n) or ``constant:c`` (c * ones(m, n))."""
    kind, _, arg = recipe.partition(":")
    if kind == "lowrank":
        if m != n:
            raise ValueError("lowrank signal is square")
        return gen_lowrank_signal(n, [float(w) for w in arg.split(",")], seed)
    if kind == "constant":
        return np.full((m, n), float(arg))
    raise ValueError(f"unknown signal recipe {recipe!r}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    m: int
    n: int
    tau: float
    signal: str
    penalties: Tuple[PenaltySpec, ...]
    theta_grid: Tuple[float, ...]
    reps_truth: int
    reps_estimate: int
    seed: int = 0
    p: int = 0
    design: str = ""
    threads: int = 1
    truth_per_theta: bool = True

    def __post_init__(self):
        if self.model not in (ADDITIVE, REGRESSION):
            raise ValueError(f"model must be {ADDITIVE!r} or {REGRESSION!r}")
        if min(self.m, self.n) < 1 or (self.model == REGRESSION and self.p < 1):
            raise ValueError("dimensions must be positive")
        if not self.penalties or not self.theta_grid:
            raise ValueError("penalty and theta grids must be nonempty")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.reps_truth < 2 or self.reps_estimate < 2:
            raise ValueError("need at least two replicates of each kind")
        object.__setattr__(self, "penalties", tuple(self.penalties))
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # flat key=value text ---------------------------------------------------
    def to_text(self) -> str:
        lines = [
            f"name={self.name}", f"model={self.model}", f"m={self.m}", f"n={self.n}",
            f"p={self.p}", f"tau={self.tau!r}", f"signal={self.signal}", f"design={self.design}",
            "penalties=" + ";".join(_penalty_token(s) for s in self.penalties),
            "theta_grid=" + ",".join(repr(t) for t in self.theta_grid),
            f"reps_truth={self.reps_truth}", f"reps_estimate={self.reps_estimate}",
            f"seed={self.seed}", f"threads={self.threads}",
            f"truth_per_theta={int(self.truth_per_theta)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kv: Dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed config line {raw!r}")
            kv[key.strip()] = value.strip()
        try:
            grid = _parse_grid(kv["theta_grid"])
            return cls(
                name=kv.get("name", "custom"), model=kv["model"], m=int(kv["m"]), n=int(kv["n"]),
                p=int(kv.get("p", 0)), tau=float(kv["tau"]), signal=kv["signal"],
                design=kv.get("design", ""),
                penalties=tuple(_parse_penalty_token(t) for t in kv["penalties"].split(";") if t),
                theta_grid=grid, reps_truth=int(kv["reps_truth"]),
                reps_estimate=int(kv["reps_estimate"]), seed=int(kv.get("seed", 0)),
                threads=int(kv.get("threads", 1)),
                truth_per_theta=bool(int(kv.get("truth_per_theta", 1))),
            )
        except KeyError as exc:
            raise ValueError(f"config missing key {exc.args[0]!r}") from None


def _penalty_token(spec: PenaltySpec) -> str:
    d = spec.to_dict()
    parts = [d["penalty"]] + [f"{k}={d[k]!r}" for k in ("a", "gamma", "q") if d.get(k) is not None]
    return ",".join(parts)


def _parse_penalty_token(token: str) -> PenaltySpec:
    head, *rest = [t.strip() for t in token.split(",")]
    d = {"penalty": head, "theta": 0.0}
    for item in rest:
        k, _, v = item.partition("=")
        d[k.strip()] = float(v)
    return PenaltySpec.from_dict(d)


def _parse_grid(text: str) -> Tuple[float, ...]:
    """Either ``t1,t2,...`` or ``linspace(lo,hi,count)``."""
    text = text.strip()
    if text.startswith("linspace(") and text.endswith(")"):
        lo, hi, cnt = text[len("linspace("):-1].split(",")
        return tuple(float(t) for t in np.linspace(float(lo), float(hi), int(cnt)))
    return tuple(float(t) for t in text.split(",") if t.strip())


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

FIGURE2_PENALTIES = (
    PenaltySpec.scad(0.0, a=3.7),
    PenaltySpec.mcplus(0.0, gamma=2.0),
    PenaltySpec.log(0.0, gamma=0.01),
    PenaltySpec.bridge(0.0, 0.1),
    PenaltySpec.bridge(0.0, 0.5),
    PenaltySpec.bridge(0.0, 0.9),
)
GRID_0_20 = tuple(float(t) for t in np.linspace(0.0, 20.0, 41))
FIGURE1_GRID = tuple(float(t) for t in np.linspace(0.0, 120.0, 21))


def figure1_config(reps: int = 10_000, seed: int = 1) -> ExperimentConfig:
    return ExperimentConfig(
        name="figure1", model=ADDITIVE, m=50, n=50, tau=1.0, signal="constant:5",
        penalties=(PenaltySpec.bridge(0.0, 0.0), PenaltySpec.bridge(0.0, 0.1)),
        theta_grid=FIGURE1_GRID, reps_truth=reps, reps_estimate=reps, seed=seed,
    )


def figure2_config(reps_truth: int = 2000, reps_estimate: int = 100, seed: int = 2) -> ExperimentConfig:
    return ExperimentConfig(
        name="figure2", model=ADDITIVE, m=100, n=100, tau=0.1, signal="lowrank:1,2,3,4,5",
        penalties=FIGURE2_PENALTIES, theta_grid=GRID_0_20,
        reps_truth=reps_truth, reps_estimate=reps_estimate, seed=seed,
    )


def figure4_config(reps_truth: int = 2000, reps_estimate: int = 100, seed: int = 4) -> ExperimentConfig:
    return ExperimentConfig(
        name="figure4", model=REGRESSION, m=300, n=100, p=100, tau=0.1,
        signal="lowrank:1,2,3,4,5", design="toeplitz", penalties=FIGURE2_PENALTIES,
        theta_grid=GRID_0_20, reps_truth=reps_truth, reps_estimate=reps_estimate, seed=seed,
    )


PRESETS = {"figure1": figure1_config, "figure2": figure2_config, "figure4": figure4_config}


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

RESULT_COLUMNS = (
    "theta", "df_true", "df_true_se", "df_est_mean", "df_est_se", "mse_true", "mse_true_se",
    "sure_mean", "sure_se", "df_est_nodensity_mean", "df_est_nodensity_se",
)


@dataclass
class ExperimentResult:
    penalty: PenaltySpec
    rows: List[Tuple[float, ...]] = field(default_factory=list)

    @property
    def label(self) -> str:
        return _penalty_token(self.penalty).replace(",", "_").replace("=", "")

    def column(self, name: str) -> np.ndarray:
        i = RESULT_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        out = [",".join(RESULT_COLUMNS)]
        out += [",".join(f"{v:.17g}" for v in row) for row in self.rows]
        return "\n".join(out) + "\n"


@dataclass
class ExperimentData:
    """What a run draws: signal, optional design, and the estimate replicates.

    Truth replicates come from :meth:`truth_for`.  With ``truth_per_theta``
    grid point t gets its own block of replicate indices, so Monte Carlo
    errors are independent across the grid; otherwise one block is shared.
    """

    cfg: ExperimentConfig
    signal: np.ndarray
    mean: np.ndarray
    design: Optional[DesignFactorization]
    estimate: SpectralReplicates
    _shared_truth: Optional[SpectralReplicates] = None

    @property
    def basis(self):
        return None if self.design is None else self.design.U

    def truth_for(self, t: int) -> SpectralReplicates:
        cfg = self.cfg
        if not cfg.truth_per_theta:
            if self._shared_truth is None:
                self._shared_truth = spectral_replicates(
                    self.mean, cfg.tau, cfg.reps_truth, cfg.seed, self.basis, NOISE_STREAM, cfg.threads)
            return self._shared_truth
        return spectral_replicates(self.mean, cfg.tau, cfg.reps_truth, cfg.seed, self.basis,
                                   NOISE_STREAM, cfg.threads, start=t * cfg.reps_truth)


def prepare(cfg: ExperimentConfig) -> ExperimentData:
    if cfg.model == ADDITIVE:
        M = make_signal(cfg.signal, cfg.m, cfg.n, cfg.seed)
        fact, mean = None, M
    else:
        M = make_signal(cfg.signal, cfg.p, cfg.n, cfg.seed)
        if cfg.design != "toeplitz":
            raise ValueError(f"unknown design recipe {cfg.design!r}")
        fact = DesignFactorization.from_design(gen_toeplitz_design(cfg.m, cfg.p, cfg.seed))
        mean = fact.X @ M
    basis = None if fact is None else fact.U
    est = spectral_replicates(mean, cfg.tau, cfg.reps_estimate, cfg.seed, basis, ESTIMATE_STREAM, cfg.threads)
    return ExperimentData(cfg, M, mean, fact, est)


def _estimates(spec: PenaltySpec, est: SpectralReplicates, rsum: np.ndarray,
               truth_sigma: np.ndarray):
    """Per-replicate (df, df without density term, sure) arrays.

    The density term uses a KDE over ``truth_sigma``, the singular values of
    independent replicates from the same model.
    """
    sigma = est.sigma
    reduced_size = sigma.shape[1] * (sigma.shape[1] + est.gap)
    shrunk = np.asarray(pen.prox(spec, sigma))
    resid = ((shrunk - sigma) ** 2).sum(axis=1) + est.perp_resid
    kind = spec.kind
    if spec.theta == 0 and kind in (Family.BRIDGE, Family.RANK):
        df = np.full(sigma.shape[0], float(reduced_size))
        return df, df, dfm.sure(resid, df, est.tau, est.size)
    jump = pen.discontinuity(spec)
    if kind in (Family.BRIDGE, Family.RANK):
        slope = np.asarray(pen.one_sided_derivative(spec, sigma, "right"))
    else:
        if not pen.stein_applicable(spec):
            raise NotApplicableError(f"{spec.label} theta={spec.theta:g}: phi_P + 1 <= 0")
        slope = np.asarray(pen.prox_derivative(spec, sigma))
    deriv, shape, cross = dfm.spectral_df_kernel(sigma, shrunk, slope, est.gap, rsum)
    naive = deriv + shape + cross
    dens = 0.0
    if jump is not None:
        dens = jump.jump_height * float(kde_matrix(truth_sigma, [jump.location])[0].sum())
    df = naive + dens
    return df, naive, dfm.sure(resid, df, est.tau, est.size)


def _row(spec: PenaltySpec, theta: float, truth: SpectralReplicates, data: ExperimentData,
         rsum: np.ndarray) -> Tuple[float, ...]:
    s = spec.with_theta(theta)
    seed = data.cfg.seed
    try:
        df_true, mse_true = sweep_truth(truth, lambda x: pen.prox(s, x))
        df, naive, risk = _estimates(s, data.estimate, rsum, truth.sigma)
    except SpectralSureError as exc:
        raise type(exc)(f"{spec.label} theta={theta:g}: {exc}") from None
    d, nv, r = (McResult.from_samples(v, seed) for v in (df, naive, risk))
    row = (theta, df_true.estimate, df_true.std_error, d.estimate, d.std_error,
           mse_true.estimate, mse_true.std_error, r.estimate, r.std_error,
           nv.estimate, nv.std_error)
    if not all(math.isfinite(v) for v in row):
        raise SpectralSureError(f"{spec.label} theta={theta:g}: non-finite result row")
    return row


def run_df_curve(cfg: ExperimentConfig, data: Optional[ExperimentData] = None) -> List[ExperimentResult]:
    """One ExperimentResult per penalty in ``cfg.penalties``.

    All penalties at grid point t share that point's truth replicates.
    """
    data = prepare(cfg) if data is None else data
    rsum = dfm.inverse_gap_sums(data.estimate.sigma)
    results = [ExperimentResult(spec.with_theta(0.0)) for spec in cfg.penalties]
    for t, theta in enumerate(cfg.theta_grid):
        truth = data.truth_for(t)
        for spec, res in zip(cfg.penalties, results):
            res.rows.append(_row(spec, theta, truth, data, rsum))
    return results


def within_band(result: ExperimentResult, est_col: str, true_col: str, k: float = 3.0,
                combine: str = "quadrature") -> np.ndarray:
    """Boolean per theta: |est - truth| <= k * combined SE.

    ``combine`` is ``quadrature`` (sqrt(se1^2 + se2^2)) or ``sum`` (se1 + se2).
    """
    est, tru = result.column(est_col), result.column(true_col)
    se1 = result.column(est_col.replace("_mean", "_se"))
    se2 = result.column(true_col + "_se")
    se = np.hypot(se1, se2) if combine == "quadrature" else se1 + se2
    return np.abs(est - tru) <= k * se
