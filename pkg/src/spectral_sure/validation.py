"""Property suites behind ``spectral-sure validate`` and the acceptance tests.

Each suite returns a :class:`SuiteResult`.  ``scale`` picks the sample sizes:
``quick`` for smoke runs, ``default`` for routine checks and ``full`` for the
acceptance sizes.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import df as dfm
from . import oracle
from . import penalty as pen
from . import regression as reg
from . import simlab
from . import spectral as sp
from .df import DensityProvider
from .penalty import PenaltySpec

SCALES = ("quick", "default", "full")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _pick(scale: str, quick, default, full):
    return {"quick": quick, "default": default, "full": full}[scale]


def _simple_matrix(rng, m, n, min_gap=1e-3):
    """Random matrix whose singular values are distinct and bounded away from 0."""
    while True:
        Y = rng.standard_normal((m, n))
        s = np.linalg.svd(Y, compute_uv=False)
        if s[-1] > min_gap and np.all(-np.diff(s) > min_gap):
            return Y


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


# ---------------------------------------------------------------------------
# scalar prox oracle
# ---------------------------------------------------------------------------

def grid_prox(spec: PenaltySpec, sigma, points: int = 4001) -> np.ndarray:
    """Brute-force argmin over x in [0, sigma] by a coarse grid then a fine local grid."""
    sig = np.atleast_1d(np.asarray(sigma, float))
    out = np.empty_like(sig)
    for i, s in enumerate(sig):
        if s == 0:
            out[i] = 0.0
            continue
        x = np.linspace(0.0, s, points)
        k = int(np.argmin(pen.objective(spec, x, s)))
        step = s / (points - 1)
        lo, hi = max(0.0, x[k] - 2 * step), min(s, x[k] + 2 * step)
        xf = np.linspace(lo, hi, points)
        cand = np.concatenate([[0.0], xf])
        out[i] = cand[int(np.argmin(pen.objective(spec, cand, s)))]
    return out


def _prox_families(rng):
    th = float(rng.uniform(0.1, 3.0))
    return [
        PenaltySpec.nuclear(th),
        PenaltySpec.scad(th, a=float(rng.uniform(2.2, 5.0))),
        PenaltySpec.mcplus(th, gamma=float(rng.uniform(1.2, 4.0))),
        PenaltySpec.firm(th, gamma=th * float(rng.uniform(1.2, 4.0))),
        PenaltySpec.log(th, gamma=float(rng.uniform(0.05, 2.0))),
        PenaltySpec.bridge(th, float(rng.uniform(0.05, 0.95))),
        PenaltySpec.rank(th),
    ]


def suite_prox_oracle(scale: str = "default", seed: int = 9) -> SuiteResult:
    """Prox agrees with a grid-search oracle; Bridge/Rank jump data match closed forms."""
    draws = _pick(scale, 100, 1000, 1000)
    rng = np.random.default_rng(seed)
    worst = 0.0
    jump_err = 0.0
    fails = 0
    for fam_idx in range(7):
        sig = rng.uniform(0.0, 12.0, draws)
        for s in sig:
            spec = _prox_families(rng)[fam_idx]
            p = float(pen.prox(spec, s))
            o = float(grid_prox(spec, s, points=801)[0])
            err = abs(p - o)
            if err > 1e-4:
                # the two branches tie at a jump; accept equal objective values
                if pen.objective(spec, p, s) <= pen.objective(spec, o, s) + 1e-10:
                    continue
                fails += 1
            worst = max(worst, err if err <= 1e-4 else worst)
    for q in np.linspace(0.0, 0.95, 20):
        for th in (0.3, 1.0, 4.0):
            spec = PenaltySpec.bridge(th, float(q))
            jump = pen.discontinuity(spec)
            b = 2 * (1 - q)
            loc = (b ** (1 / (2 - q)) + q * b ** ((q - 1) / (2 - q))) * th ** (1 / (2 - q))
            height = (b * th) ** (1 / (2 - q))
            jump_err = max(jump_err, _rel(jump.location, loc), _rel(jump.jump_height, height))
            # value of the nonzero branch at the threshold equals the jump height
            jump_err = max(jump_err, _rel(float(pen.prox(spec, jump.location)), height))
            # both branches give the same objective at the threshold
            gap = pen.objective(spec, height, jump.location) - pen.objective(spec, 0.0, jump.location)
            jump_err = max(jump_err, abs(gap) / max(1.0, jump.location**2))
    ok = fails == 0 and jump_err <= 1e-10
    return SuiteResult("prox-oracle", ok,
                       f"{7 * draws} draws, {fails} disagreements > 1e-4, max agreeing err {worst:.1e}; "
                       f"jump location/height max rel err {jump_err:.1e} (tol 1e-10)")


# ---------------------------------------------------------------------------
# divergence, directional derivative, symmetrisation, reduced rank
# ---------------------------------------------------------------------------

def _divergence_functions(rng):
    th = float(rng.uniform(0.1, 1.0))
    return [
        ("identity", sp.identity_function(), None),
        ("soft", sp.prox_function(PenaltySpec.nuclear(th)), PenaltySpec.nuclear(th)),
        ("scad", sp.prox_function(PenaltySpec.scad(th)), PenaltySpec.scad(th)),
        ("mcplus", sp.prox_function(PenaltySpec.mcplus(th)), PenaltySpec.mcplus(th)),
        ("log", sp.prox_function(PenaltySpec.log(th, gamma=0.5)), PenaltySpec.log(th, gamma=0.5)),
    ]


def suite_divergence_fd(scale: str = "default", seed: int = 4) -> SuiteResult:
    count = _pick(scale, 40, 200, 200)
    rng = np.random.default_rng(seed)
    worst = 0.0
    bad = compared = 0
    done = 0
    while done < count:
        n = int(rng.integers(1, 6))
        m = int(rng.integers(n, 9))
        Y = _simple_matrix(rng, m, n)
        dec = sp.svd(Y)
        for _name, f, spec in _divergence_functions(rng):
            if spec is not None and np.any(pen.near_kink(spec, dec.sigma, rtol=1e-4)):
                continue
            exact = sp.divergence(dec, f)
            fd = oracle.fd_divergence(lambda Z, f=f: sp.apply_spectral(sp.svd(Z), f), Y)
            err = _rel(exact, fd)
            worst = max(worst, err)
            bad += err > 1e-4
            compared += 1
        done += 1
    return SuiteResult("divergence-vs-fd", bad == 0,
                       f"{count} matrices, {compared} comparisons over 5 functions, "
                       f"max rel err {worst:.1e} (tol 1e-4)")


def suite_shapiro(scale: str = "default", seed: int = 5) -> SuiteResult:
    count = _pick(scale, 30, 100, 100)
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_sq = 0.0
    t = 1e-7
    done = 0
    while done < count:
        k = int(rng.integers(4, 7))
        A = rng.standard_normal((k, k))
        X = (A + A.T) / 2
        H = rng.standard_normal((k, k))
        H = (H + H.T) / 2
        th = float(rng.uniform(0.1, 1.0))
        f = sp.odd_extension(sp.prox_function(PenaltySpec.scad(th)))
        lam = np.linalg.eigvalsh(X)
        if np.any(pen.near_kink(PenaltySpec.scad(th), np.abs(lam), rtol=1e-5)):
            continue

        def F(Z, g):
            w, Q = np.linalg.eigh(Z)
            return (Q * g(w)) @ Q.T

        D = sp.shapiro_directional_derivative(X, f, H)
        fd = (F(X + t * H, f) - F(X, f)) / t
        worst = max(worst, np.abs(D - fd).max() / max(1.0, np.abs(D).max()))
        sq = sp.square_function()
        Dsq = sp.shapiro_directional_derivative(X, sq, H)
        worst_sq = max(worst_sq, np.abs(Dsq - (X @ H + H @ X)).max())
        done += 1
    ok = worst <= 1e-4 and worst_sq <= 1e-10
    return SuiteResult("directional-derivative", ok,
                       f"{count} inputs, max rel err {worst:.1e} (tol 1e-4); "
                       f"x^2 vs XH+HX max err {worst_sq:.1e}")


def suite_symmetrization(scale: str = "default", seed: int = 6) -> SuiteResult:
    count = _pick(scale, 30, 100, 100)
    rng = np.random.default_rng(seed)
    rec = orth = 0.0
    for _ in range(count):
        m, n = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        sym = sp.symmetrize(sp.svd(rng.standard_normal((m, n))))
        P = sym.P
        rec = max(rec, np.abs(P @ sym.SigmaStar @ P.T - sym.Ystar).max())
        orth = max(orth, np.abs(P.T @ P - np.eye(P.shape[0])).max())
    ok = rec <= 1e-8 and orth <= 1e-10
    return SuiteResult("symmetrization", ok,
                       f"{count} inputs, reconstruction {rec:.1e} (tol 1e-8), orthogonality {orth:.1e} (tol 1e-10)")


def suite_reduced_rank(scale: str = "default", seed: int = 7) -> SuiteResult:
    count = _pick(scale, 30, 100, 100)
    rng = np.random.default_rng(seed)
    worst = 0.0
    lower_ok = full_ok = True
    for _ in range(count):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(n, 9))
        Y = _simple_matrix(rng, m, n, min_gap=1e-2)
        dec = sp.svd(Y)
        K = int(rng.integers(1, n))
        val = dfm.df_reduced_rank(dec, K).value
        fd = oracle.fd_divergence(lambda Z: sp.truncate_rank(sp.svd(Z), K), Y)
        worst = max(worst, abs(val - fd))
        lower_ok &= val >= (m + n - K) * K
        full_ok &= dfm.df_reduced_rank(dec, n).value == m * n
    ok = worst <= 1e-4 and lower_ok and full_ok
    return SuiteResult("reduced-rank", ok,
                       f"{count} inputs, max |formula - fd| {worst:.1e} (tol 1e-4); "
                       f"K=n gives mn: {full_ok}; >= (m+n-K)K: {lower_ok}")


def suite_regression_reduction(scale: str = "default", seed: int = 8) -> SuiteResult:
    count = _pick(scale, 20, 50, 50)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        p = int(rng.integers(2, 7))
        m = int(rng.integers(p + 1, 15))
        n = int(rng.integers(2, 7))
        fact = reg.DesignFactorization.from_design(rng.standard_normal((m, p)))
        Y = rng.standard_normal((m, n))
        k = min(fact.r, n)
        K = int(rng.integers(1, k + 1))
        a = reg.df_reduced_rank_regression(fact, Y, K).value
        b = reg.df_reduced_rank_from_fit(fact, Y, K)
        worst = max(worst, _rel(a, b))
        th = float(rng.uniform(0.05, 1.0))
        spec = PenaltySpec.scad(th)
        s = reg.fitted_spectrum(fact, Y)
        if not np.any(pen.near_kink(spec, s, rtol=1e-6)):
            a = reg.spectral_regression(fact, Y, spec).df.value
            b = reg.df_spectral_from_fit(fact, Y, spec)
            worst = max(worst, _rel(a, b))
        spec = PenaltySpec.bridge(th, float(rng.uniform(0.0, 0.9)))
        dens = DensityProvider.constant(k, 0.05)
        if not np.any(pen.near_kink(spec, s, rtol=1e-6)):
            a = reg.spectral_regression(fact, Y, spec, dens).df.value
            b = reg.df_spectral_from_fit(fact, Y, spec, dens)
            worst = max(worst, _rel(a, b))
    return SuiteResult("regression-reduction", worst <= 1e-10,
                       f"{count} instances, max rel diff {worst:.1e} (tol 1e-10)")


# ---------------------------------------------------------------------------
# Monte Carlo suites
# ---------------------------------------------------------------------------

def smoothing_consistency(scale: str = "default", seed: int = 3):
    """Smoothed truncation df at h=0.02 and h=10 against the closed-form truncation df.

    Setting: 50 x 50 constant signal 5, tau=1, rank 2.

    Returns a dict with the three McResults and the combined-SE z scores.
    """
    reps = _pick(scale, 100, 400, 1000)
    draws = _pick(scale, 2, 4, 4)
    # one SVD per replicate, so the reference gets more reps than the smoothed runs
    ref_reps = _pick(scale, 1000, 2000, 4000)
    M = 5 * np.ones((50, 50))
    tau, K = 1.0, 2
    small = oracle.df_smoothed_truncate_mc(M, tau, K, 0.02, reps, draws, seed)
    large = oracle.df_smoothed_truncate_mc(M, tau, K, 10.0, reps, draws, seed)
    cor5 = oracle.McResult.from_samples(
        [dfm.df_reduced_rank(sp.svd(M + oracle.noise(M.shape, tau, seed + 1, b)), K).value
         for b in range(ref_reps)], seed + 1)

    def z(a, b):
        return abs(a.estimate - b.estimate) / math.hypot(a.std_error, b.std_error)

    return {"small": small, "large": large, "cor5": cor5,
            "z_small": z(small, cor5), "z_large": z(large, cor5)}


def suite_smoothing(scale: str = "default", seed: int = 3) -> SuiteResult:
    r = smoothing_consistency(scale, seed)
    ok = r["z_small"] <= 3 and r["z_large"] > 3
    return SuiteResult(
        "smoothing-consistency", ok,
        f"h=0.02: {r['small'].estimate:.2f}+-{r['small'].std_error:.2f}, "
        f"closed-form MC {r['cor5'].estimate:.2f}+-{r['cor5'].std_error:.2f} (z={r['z_small']:.2f} <= 3); "
        f"h=10: {r['large'].estimate:.2f} (z={r['z_large']:.1f} > 3)")


def figure1_check(results) -> Dict[str, dict]:
    out = {}
    for r in results:
        inside = simlab.within_band(r, "df_est_mean", "df_true")
        tru, se_t = r.column("df_true"), r.column("df_true_se")
        naive, se_n = r.column("df_est_nodensity_mean"), r.column("df_est_nodensity_se")
        below = (tru - naive) > 3 * np.hypot(se_t, se_n)
        out[r.label] = {"inside": int(inside.sum()), "points": len(inside),
                        "naive_below": int(below.sum()),
                        "passed": inside.sum() >= len(inside) - 2 and below.sum() >= 5}
    return out


def suite_figure1(scale: str = "default", threads: int = 1) -> SuiteResult:
    reps = _pick(scale, 500, 2000, 10_000)
    cfg = simlab.figure1_config(reps=reps).replace(threads=threads)
    checks = figure1_check(simlab.run_df_curve(cfg))
    ok = all(c["passed"] for c in checks.values())
    detail = "; ".join(f"{k}: {c['inside']}/{c['points']} within 3 SE, naive below in {c['naive_below']}"
                       for k, c in checks.items())
    return SuiteResult(f"figure1 ({reps} reps)", ok, detail)


def panel_check(results, frac: float = 0.9) -> Dict[str, dict]:
    out = {}
    for r in results:
        d = simlab.within_band(r, "df_est_mean", "df_true")
        s = simlab.within_band(r, "sure_mean", "mse_true")
        need = math.ceil(frac * len(d))
        out[r.label] = {"df_inside": int(d.sum()), "risk_inside": int(s.sum()), "points": len(d),
                        "passed": d.sum() >= need and s.sum() >= need}
    return out


def _panel_suite(name, cfg_fn, scale, threads):
    reps_truth = _pick(scale, 200, 2000, 2000)
    reps_est = _pick(scale, 20, 100, 100)
    cfg = cfg_fn(reps_truth=reps_truth, reps_estimate=reps_est).replace(threads=threads)
    if scale == "quick":
        cfg = cfg.replace(theta_grid=cfg.theta_grid[::4])
    checks = panel_check(simlab.run_df_curve(cfg))
    ok = all(c["passed"] for c in checks.values())
    detail = "; ".join(f"{k}: df {c['df_inside']}/{c['points']}, risk {c['risk_inside']}/{c['points']}"
                       for k, c in checks.items())
    return SuiteResult(f"{name} ({reps_truth}/{reps_est} reps)", ok, detail)


def suite_figure2(scale: str = "default", threads: int = 1) -> SuiteResult:
    return _panel_suite("figure2", simlab.figure2_config, scale, threads)


def suite_figure4(scale: str = "default", threads: int = 1) -> SuiteResult:
    return _panel_suite("figure4", simlab.figure4_config, scale, threads)


def suite_linear_calibration(scale: str = "default", seed: int = 10) -> SuiteResult:
    reps = _pick(scale, 200, 1000, 2000)
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((6, 4))
    zs = []
    for c in (1.0, 0.5):
        r = oracle.true_df_mc(lambda Y, c=c: c * Y, M, 0.7, reps, seed)
        zs.append(abs(r.estimate - c * M.size) / r.std_error)
    return SuiteResult("linear-calibration", max(zs) <= 3,
                       f"identity and 0.5*Y df within {max(zs):.2f} SE of trace (tol 3)")


# ---------------------------------------------------------------------------

FAST_SUITES: List[Callable[[str], SuiteResult]] = [
    suite_prox_oracle, suite_divergence_fd, suite_shapiro, suite_symmetrization,
    suite_reduced_rank, suite_regression_reduction, suite_linear_calibration, suite_smoothing,
]
EXPERIMENT_SUITES = [suite_figure1, suite_figure2, suite_figure4]


def run_all(scale: str = "default", threads: int = 1, experiments: bool = True) -> List[SuiteResult]:
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    results = []
    suites = [lambda s, f=f: f(s) for f in FAST_SUITES]
    if experiments:
        suites += [lambda s, f=f: f(s, threads=threads) for f in EXPERIMENT_SUITES]
    for fn in suites:
        t0 = time.perf_counter()
        try:
            res = fn(scale)
        except Exception as exc:  # a crashing suite is a failed suite
            res = SuiteResult(getattr(fn, "__name__", "suite"), False, f"error: {exc!r}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
