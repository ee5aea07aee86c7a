import math

import numpy as np
import pytest

from spectral_sure import penalty as pen
from spectral_sure import spectral as sp
from spectral_sure.df import (
    DensityProvider,
    df_bridge,
    df_estimate,
    df_rank_regularized,
    df_reduced_rank,
    df_spectral,
    sure_risk,
)
from spectral_sure.errors import (
    AtKinkError,
    MissingDensityError,
    NotApplicableError,
    RepeatedSingularValuesError,
    ShapeMismatchError,
    TiedAtCutError,
)
from spectral_sure.oracle import fd_divergence, true_df_mc
from spectral_sure.penalty import PenaltySpec


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def spectral_fit(spec):
    return lambda Z: sp.apply_spectral(sp.svd(Z), lambda s: pen.prox(spec, s))


ZERO = DensityProvider.constant(10, 0.0)


# --- df_spectral -------------------------------------------------------------

def test_nuclear_theta0_is_mn():
    assert df_spectral(sp.svd(rand((7, 4), 1)), PenaltySpec.nuclear(0)).value == pytest.approx(28)


def test_nuclear_large_theta_is_zero():
    dec = sp.svd(rand((7, 4), 1))
    assert df_spectral(dec, PenaltySpec.nuclear(dec.sigma[0] + 0.1)).value == 0


def test_scad_equals_divergence_and_fd():
    Y = rand((6, 4), 2)
    spec = PenaltySpec.scad(1.0, a=3.7)
    dec = sp.svd(Y)
    val = df_spectral(dec, spec).value
    assert val == pytest.approx(sp.divergence(dec, sp.prox_function(spec)), rel=1e-10)
    assert val == pytest.approx(fd_divergence(spectral_fit(spec), Y), rel=1e-4)


def test_components_sum_to_value():
    est = df_spectral(sp.svd(rand((6, 4), 3)), PenaltySpec.mcplus(0.5))
    c = est.components
    assert est.value == pytest.approx(c.deriv_term + c.shape_term + c.cross_term
                                      + c.zero_block_term + c.density_term, abs=1e-10)
    assert c.density_term == 0


def test_df_spectral_rejects_nonconvex_prox():
    with pytest.raises(NotApplicableError):
        df_spectral(sp.svd(rand((4, 3), 1)), PenaltySpec.bridge(1.0, 0.5))


def test_df_spectral_rejects_repeated_values():
    with pytest.raises(RepeatedSingularValuesError):
        df_spectral(sp.svd(np.eye(3)), PenaltySpec.nuclear(0.5))


@pytest.mark.parametrize("spec", [PenaltySpec.nuclear(0.7), PenaltySpec.scad(0.7), PenaltySpec.mcplus(0.7),
                                  PenaltySpec.log(0.3, gamma=1.0), PenaltySpec.firm(0.5, gamma=2.0)],
                         ids=lambda s: s.label)
def test_agreement_chain(spec):
    rng = np.random.default_rng(99)
    fit = spectral_fit(spec)
    for _ in range(100):
        Y = rng.standard_normal((5, 3)) * 1.5
        dec = sp.svd(Y)
        if np.any(pen.near_kink(spec, dec.sigma, rtol=1e-4)):
            continue
        val = df_spectral(dec, spec).value
        assert val == pytest.approx(sp.divergence(dec, sp.prox_function(spec)), abs=1e-8)
        assert abs(val - fd_divergence(fit, Y)) <= 1e-4 * max(1.0, abs(val))


@pytest.mark.parametrize("spec", [PenaltySpec.nuclear(2.0), PenaltySpec.scad(2.0), PenaltySpec.mcplus(2.0),
                                  PenaltySpec.log(1.0, gamma=0.5)], ids=lambda s: s.label)
def test_unbiased_against_monte_carlo(spec):
    rng = np.random.default_rng(5)
    Mstar = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 6))
    tau, reps, seed = 1.0, 4000, 17
    from spectral_sure.oracle import noise
    vals = [df_spectral(sp.svd(Mstar + noise(Mstar.shape, tau, seed, b)), spec).value for b in range(reps)]
    est_mean = np.mean(vals)
    est_se = np.std(vals, ddof=1) / math.sqrt(reps)
    truth = true_df_mc(spectral_fit(spec), Mstar, tau, reps, seed)
    assert abs(est_mean - truth.estimate) <= 3 * math.hypot(est_se, truth.std_error)


# --- jump families -------------------------------------------------------------

def test_rank_small_theta_is_mn():
    Y = rand((7, 4), 4)
    assert df_rank_regularized(sp.svd(Y), 1e-12, ZERO).value == pytest.approx(28)


def test_rank_large_theta_is_zero():
    dec = sp.svd(rand((7, 4), 4))
    assert df_rank_regularized(dec, dec.sigma[0] ** 2, ZERO).value == 0


def test_rank_density_term():
    dec = sp.svd(rand((7, 4), 4))
    est = df_rank_regularized(dec, 0.5, DensityProvider.constant(4, 0.25))
    assert est.components.density_term == pytest.approx(1.0 * 4 * 0.25)
    assert est.value_without_density == pytest.approx(est.value - 1.0)


def test_rank_matches_reduced_rank_when_threshold_in_gap():
    dec = sp.svd(rand((7, 4), 6))
    s = dec.sigma
    t = 0.5 * (s[1] + s[2])
    est = df_rank_regularized(dec, t * t / 2, ZERO)
    assert est.value == pytest.approx(df_reduced_rank(dec, 2).value, rel=1e-12)


def test_missing_density_raises():
    with pytest.raises(MissingDensityError):
        df_rank_regularized(sp.svd(rand((5, 3), 1)), 0.5, None)
    with pytest.raises(MissingDensityError):
        df_rank_regularized(sp.svd(rand((5, 3), 1)), 0.5, DensityProvider.constant(2))


def test_bridge_q0_reproduces_rank():
    dec = sp.svd(rand((6, 4), 8))
    dens = DensityProvider.constant(4, 0.1)
    a = df_bridge(dec, 0.7, 0.0, dens)
    b = df_rank_regularized(dec, 0.7, dens)
    assert a.value == pytest.approx(b.value, rel=1e-13)


def test_bridge_q1_is_nuclear():
    dec = sp.svd(rand((6, 4), 8))
    assert df_bridge(dec, 0.5, 1.0, None).value == pytest.approx(
        df_spectral(dec, PenaltySpec.nuclear(0.5)).value)


def test_bridge_continuous_part_matches_fd():
    Y = rand((6, 4), 10)
    spec = PenaltySpec.bridge(1.0, 0.5)
    dec = sp.svd(Y)
    loc = pen.discontinuity(spec).location
    assert np.min(np.abs(dec.sigma - loc)) > 1e-3
    est = df_bridge(dec, 1.0, 0.5, DensityProvider.constant(4, 0.0))
    assert est.value == pytest.approx(fd_divergence(spectral_fit(spec), Y), rel=1e-4)


def test_bridge_density_term_uses_closed_forms():
    dec = sp.svd(rand((6, 4), 10))
    est = df_bridge(dec, 1.0, 0.5, DensityProvider.constant(4, 0.2))
    assert est.components.density_term == pytest.approx(1.0 * 4 * 0.2)


def test_bridge_at_jump_raises():
    spec = PenaltySpec.bridge(1.0, 0.5)
    loc = pen.discontinuity(spec).location
    Y = np.zeros((4, 3))
    Y[0, 0], Y[1, 1], Y[2, 2] = 3.0, loc, 0.5
    with pytest.raises(AtKinkError):
        df_bridge(sp.svd(Y), 1.0, 0.5, ZERO)


def test_df_estimate_dispatch():
    dec = sp.svd(rand((6, 4), 12))
    assert df_estimate(dec, PenaltySpec.bridge(0.0, 0.3)).value == pytest.approx(24)
    assert df_estimate(dec, PenaltySpec.rank(0.0)).value == pytest.approx(24)
    assert df_estimate(dec, PenaltySpec.scad(0.4)).value == df_spectral(dec, PenaltySpec.scad(0.4)).value


# --- reduced rank ---------------------------------------------------------------

def test_reduced_rank_full_is_mn():
    assert df_reduced_rank(sp.svd(rand((7, 4), 1)), 4).value == 28


def test_reduced_rank_worked_example():
    assert df_reduced_rank(sp.svd(np.diag([3.0, 2.0, 1.0])), 1).value == pytest.approx(6.85)


def test_reduced_rank_matches_fd():
    Y = rand((6, 4), 13)
    est = lambda Z: sp.truncate_rank(sp.svd(Z), 2)
    assert df_reduced_rank(sp.svd(Y), 2).value == pytest.approx(fd_divergence(est, Y), rel=1e-4)


def test_reduced_rank_zero_and_bounds():
    dec = sp.svd(rand((6, 4), 14))
    assert df_reduced_rank(dec, 0).value == 0
    for K in range(1, 4):
        assert df_reduced_rank(dec, K).value >= (6 + 4 - K) * K
    with pytest.raises(ValueError):
        df_reduced_rank(dec, 5)


def test_reduced_rank_tie_at_cut_raises():
    with pytest.raises(TiedAtCutError):
        df_reduced_rank(sp.svd(np.diag([3.0, 2.0, 2.0])), 2)


# --- SURE ----------------------------------------------------------------------

def test_sure_identity():
    Y = rand((5, 3), 1)
    assert sure_risk(Y, Y, 15, 2.0) == pytest.approx(4.0 * 15)


def test_sure_zero_fit():
    Y = rand((5, 3), 1)
    assert sure_risk(Y, np.zeros_like(Y), 0, 1.0) == pytest.approx(-15 + np.sum(Y**2))


def test_sure_errors():
    with pytest.raises(ShapeMismatchError):
        sure_risk(np.zeros((2, 2)), np.zeros((2, 3)), 0, 1.0)
    with pytest.raises(ValueError):
        sure_risk(np.zeros((2, 2)), np.zeros((2, 2)), 0, 0.0)
