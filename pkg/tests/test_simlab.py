import numpy as np
import pytest

from spectral_sure import penalty as pen
from spectral_sure import simlab
from spectral_sure.errors import NotApplicableError
from spectral_sure.oracle import true_df_mc
from spectral_sure.penalty import PenaltySpec
from spectral_sure import spectral as sp


# --- generators ----------------------------------------------------------------

def test_lowrank_signal_zero_weights():
    assert np.array_equal(simlab.gen_lowrank_signal(10, [0.0], seed=1), np.zeros((10, 10)))


def test_lowrank_signal_rank_and_determinism():
    M = simlab.gen_lowrank_signal(100, [1, 2, 3, 4, 5], seed=3)
    s = np.linalg.svd(M, compute_uv=False)
    assert np.sum(s > 1e-8 * s[0]) == 5
    assert np.array_equal(M, simlab.gen_lowrank_signal(100, [1, 2, 3, 4, 5], seed=3))
    assert np.allclose(M, M.T)


def test_lowrank_signal_rejects_empty_weights():
    with pytest.raises(ValueError):
        simlab.gen_lowrank_signal(5, [], seed=0)


def test_toeplitz_covariance_entries():
    S = simlab.toeplitz_covariance(300, 5)
    assert np.allclose(np.diag(S), 1 / 300)
    assert S[0, 2] == pytest.approx(1 / (4 * 300))


def test_toeplitz_design_sample_covariance():
    m, p = 100_000, 4
    X = simlab.gen_toeplitz_design(m, p, seed=2)
    assert np.max(np.abs(X.T @ X / m - simlab.toeplitz_covariance(m, p))) <= 5e-3
    # the same check on the unit-diagonal scale, where it has teeth
    target = simlab.toeplitz_covariance(m, p) * m
    assert np.max(np.abs(X.T @ X - target)) <= 0.02


def test_make_signal_recipes():
    assert np.array_equal(simlab.make_signal("constant:5", 3, 2, 0), np.full((3, 2), 5.0))
    assert simlab.make_signal("lowrank:1,2", 6, 6, 0).shape == (6, 6)
    with pytest.raises(ValueError):
        simlab.make_signal("sparse:1", 3, 3, 0)


# --- configuration -------------------------------------------------------------

def test_config_text_round_trip():
    for fn in simlab.PRESETS.values():
        cfg = fn()
        assert simlab.ExperimentConfig.from_text(cfg.to_text()) == cfg


def test_config_linspace_grid_and_comments():
    text = """# a comment
    name=x
    model=additive
    m=5
    n=4
    tau=1
    signal=constant:1
    penalties=scad,a=3.7;bridge,q=0.5
    theta_grid=linspace(0,2,5)
    reps_truth=10
    reps_estimate=10
    """
    cfg = simlab.ExperimentConfig.from_text(text)
    assert cfg.theta_grid == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert cfg.penalties[1] == PenaltySpec.bridge(0.0, 0.5)


@pytest.mark.parametrize("change", [dict(model="other"), dict(m=0), dict(theta_grid=()),
                                    dict(tau=0.0), dict(reps_truth=1)])
def test_config_validation(change):
    with pytest.raises(ValueError):
        simlab.figure2_config().replace(**change)


def test_config_missing_key():
    with pytest.raises(ValueError):
        simlab.ExperimentConfig.from_text("model=additive\n")


def test_presets_match_settings():
    f1 = simlab.figure1_config()
    assert (f1.m, f1.n, f1.tau, f1.reps_truth, len(f1.theta_grid)) == (50, 50, 1.0, 10_000, 21)
    assert [p.kind for p in f1.penalties] == [pen.Family.RANK, pen.Family.BRIDGE]
    f2 = simlab.figure2_config()
    assert (f2.m, f2.n, f2.tau, len(f2.penalties)) == (100, 100, 0.1, 6)
    assert f2.theta_grid[0] == 0 and f2.theta_grid[-1] == 20 and len(f2.theta_grid) == 41
    f4 = simlab.figure4_config()
    assert (f4.m, f4.n, f4.p, f4.model, f4.design) == (300, 100, 100, "regression", "toeplitz")


# --- curve runner ---------------------------------------------------------------

def small_cfg(**kw):
    base = dict(name="small", model="additive", m=8, n=6, tau=0.5, signal="constant:1",
                penalties=(PenaltySpec.scad(0.0), PenaltySpec.bridge(0.0, 0.5)),
                theta_grid=(0.0, 0.5, 1.0), reps_truth=200, reps_estimate=50, seed=3)
    base.update(kw)
    return simlab.ExperimentConfig(**base)


def test_run_df_curve_shape_and_theta0():
    res = simlab.run_df_curve(small_cfg())
    assert len(res) == 2
    for r in res:
        assert len(r.rows) == 3 and all(len(row) == len(simlab.RESULT_COLUMNS) for row in r.rows)
        assert r.column("df_est_mean")[0] == pytest.approx(48)
        assert r.column("df_true")[0] == pytest.approx(48, abs=4 * r.column("df_true_se")[0] + 1e-9)


def test_run_df_curve_is_deterministic():
    a = [r.to_csv() for r in simlab.run_df_curve(small_cfg())]
    b = [r.to_csv() for r in simlab.run_df_curve(small_cfg(threads=3))]
    assert a == b


def test_truth_column_matches_generic_oracle():
    cfg = small_cfg(truth_per_theta=False, theta_grid=(0.7,), penalties=(PenaltySpec.mcplus(0.0),))
    row = simlab.run_df_curve(cfg)[0]
    spec = PenaltySpec.mcplus(0.7)
    est = lambda Y: sp.apply_spectral(sp.svd(Y), lambda s: pen.prox(spec, s))
    ref = true_df_mc(est, np.full((8, 6), 1.0), 0.5, 200, 3)
    assert row.column("df_true")[0] == pytest.approx(ref.estimate, rel=1e-9)


def test_regression_run_uses_reduced_dimensions():
    cfg = small_cfg(model="regression", m=20, n=5, p=5, signal="lowrank:1,2", design="toeplitz",
                    theta_grid=(0.0,))
    res = simlab.run_df_curve(cfg)
    assert res[1].column("df_est_mean")[0] == pytest.approx(25)


def test_errors_name_theta():
    cfg = small_cfg(penalties=(PenaltySpec.log(0.0, gamma=0.01),), theta_grid=(500.0,))
    with pytest.raises(NotApplicableError, match="theta=500"):
        simlab.run_df_curve(cfg)


def test_within_band_combinations():
    r = simlab.ExperimentResult(PenaltySpec.scad(0.0), rows=[
        (0.0, 10.0, 1.0, 13.5, 0.5, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0)])
    assert not simlab.within_band(r, "df_est_mean", "df_true")[0]
    assert simlab.within_band(r, "df_est_mean", "df_true", combine="sum")[0]


def test_result_label_and_csv():
    r = simlab.ExperimentResult(PenaltySpec.bridge(0.0, 0.1), rows=[tuple(range(11))])
    assert r.label == "bridge_q0.1"
    assert r.to_csv().splitlines()[0] == ",".join(simlab.RESULT_COLUMNS)


def test_figure2_reduced_reps_continuous_families():
    cfg = simlab.figure2_config(reps_truth=20, reps_estimate=20).replace(penalties=simlab.FIGURE2_PENALTIES[:3])
    for res in simlab.run_df_curve(cfg):
        ok = simlab.within_band(res, "df_est_mean", "df_true", combine="sum")
        assert ok.all(), (res.label, np.flatnonzero(~ok))
