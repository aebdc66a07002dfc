import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats
from scipy.special import erfc

from phantomho.analysis import (
    AnalysisParams, DataError, MarkovModel, MultiplicityError, SinrProcessParams, TrafficParams,
    TransitionFactors, UndefinedConditionalError, access_probability, blocking_probability,
    conditional_sinr_factor, dwell_exceed_probability, dwell_short_probability, erlang_b, evaluate,
    estimate_markov_from_simulation, gaussian_below_probability, gaussian_exceed_probability,
    guard_channel_stationary, joint_cross_probability, sample_markov_trace, state2_probability,
    stationary_distribution, transition_prob_s2_to_s1,
)


# ---------------------------------------------------------------------------
# blocking


def test_blocking_single_channel():
    assert blocking_probability(TrafficParams(0.5, 0.5, 1.0, T=1, g=0)) == pytest.approx(0.5, abs=1e-15)


def test_blocking_guard_example():
    assert blocking_probability(TrafficParams(1.0, 1.0, 1.0, T=2, g=1)) == pytest.approx(0.25, abs=1e-15)


def test_no_channels_blocks_everything():
    assert blocking_probability(TrafficParams(1.0, 1.0, 1.0, T=0, g=0)) == 1.0


@pytest.mark.parametrize("T", [1, 3, 7, 20])
@pytest.mark.parametrize("rho", [0.1, 1.0, 5.0, 10.0])
def test_guard_free_is_erlang_b(T, rho):
    closed = rho ** T / math.factorial(T) / sum(rho ** j / math.factorial(j) for j in range(T + 1))
    assert blocking_probability(TrafficParams(rho / 2, rho / 2, 1.0, T=T, g=0)) == pytest.approx(closed, rel=1e-12)
    assert erlang_b(T, rho) == pytest.approx(closed, rel=1e-12)


def test_blocking_matches_birth_death_chain_small_grid():
    for T in range(1, 8):
        for g in range(T + 1):
            p = TrafficParams(0.7, 0.4, 0.5, T=T, g=g)
            assert abs(blocking_probability(p) - guard_channel_stationary(p)[T]) < 1e-12


@pytest.mark.parametrize("kw", [dict(lambda_n=0), dict(mu_c=-1), dict(g=3)])
def test_traffic_validation(kw):
    base = dict(lambda_n=1.0, lambda_h=1.0, mu_c=1.0, T=2, g=0)
    base.update(kw)
    with pytest.raises(ValueError):
        TrafficParams(**base)


@settings(max_examples=150, deadline=None)
@given(T=st.integers(1, 20), gfrac=st.floats(0, 1), ln=st.floats(0.05, 5), lh=st.floats(0.05, 5),
       bump=st.floats(0.01, 2), which=st.sampled_from(["lambda_n", "lambda_h"]))
def test_blocking_monotone_in_arrivals(T, gfrac, ln, lh, bump, which):
    g = int(gfrac * T)
    base = TrafficParams(ln, lh, 1.0, T=T, g=g)
    more = TrafficParams(ln + bump * (which == "lambda_n"), lh + bump * (which == "lambda_h"), 1.0, T=T, g=g)
    assert blocking_probability(more) >= blocking_probability(base) - 1e-15


# ---------------------------------------------------------------------------
# dwell and access


def test_dwell_examples():
    assert dwell_exceed_probability(5.0, 5.0) == 0.5
    assert dwell_exceed_probability(15.0, 5.0) == 0.75
    assert dwell_exceed_probability(15.0, 0.0) == 1.0


def test_dwell_both_zero_is_domain_error():
    with pytest.raises(ValueError):
        dwell_exceed_probability(0.0, 0.0)


def test_dwell_monte_carlo():
    rng = np.random.default_rng(0)
    d, e = rng.exponential(15.0, 1_000_000), rng.exponential(5.0, 1_000_000)
    assert abs((d >= e).mean() - 0.75) < 1e-2


@settings(max_examples=200, deadline=None)
@given(d=st.floats(0, 1e6), e=st.floats(0, 1e6))
def test_dwell_complement_sums_to_one(d, e):
    assume(d + e > 0)
    assert dwell_exceed_probability(d, e) + dwell_short_probability(d, e) == 1.0


def test_access_probability():
    assert access_probability() == 0.5
    assert access_probability(1.0) == 1.0
    assert transition_prob_s2_to_s1(TransitionFactors(p_access=0.0, p_sinr=0.9)) == 0.0


# ---------------------------------------------------------------------------
# Gaussian terms


def test_gaussian_exceed_examples():
    assert gaussian_exceed_probability(1.0, 1.0, 2.0) == 0.5
    q1 = 0.5 * erfc(1 / math.sqrt(2))
    assert gaussian_exceed_probability(3.0, 1.0, 2.0) == pytest.approx(q1, abs=1e-12)
    assert gaussian_exceed_probability(3.0, 1.0, 2.0) == pytest.approx(0.158655, abs=1e-6)
    assert gaussian_exceed_probability(0.0, 1.0, 1e-6) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(th=st.floats(-50, 50), mu=st.floats(-50, 50), sigma=st.floats(1e-3, 20))
def test_gaussian_symmetry(th, mu, sigma):
    total = gaussian_exceed_probability(th, mu, sigma) + gaussian_exceed_probability(-th, -mu, sigma)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert gaussian_below_probability(th, mu, sigma) == pytest.approx(
        1 - gaussian_exceed_probability(th, mu, sigma), abs=1e-12)


def test_joint_cross_independent():
    proc = SinrProcessParams(0.0, 0.0, 1.0, 1.0, 0.0)
    assert joint_cross_probability(0.0, proc) == pytest.approx(0.25, abs=1e-9)


def test_joint_cross_perfect_correlation():
    assert joint_cross_probability(0.0, SinrProcessParams(0.0, 0.0, 1.0, 1.0, 1.0)) == 0.0


def test_joint_cross_matches_bivariate_cdf():
    # P(X < 0, Y > 0) = P(X < 0) - P(X < 0, Y < 0) for a standard pair
    for rho in (-0.5, 0.0, 0.5, 0.9):
        both_below = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).cdf([0, 0])
        expected = 0.5 - both_below
        assert joint_cross_probability(0.0, SinrProcessParams(0, 0, 1, 1, rho)) == pytest.approx(expected, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(th=st.floats(-3, 3), mp=st.floats(-2, 2), mc=st.floats(-2, 2), sp=st.floats(0.1, 3),
       sc=st.floats(0.1, 3), rho=st.floats(-1, 1))
def test_joint_cross_frechet_bound(th, mp, mc, sp, sc, rho):
    proc = SinrProcessParams(mp, mc, sp, sc, rho)
    p = joint_cross_probability(th, proc)
    bound = min(gaussian_exceed_probability(th, mc, sc), gaussian_below_probability(th, mp, sp))
    assert 0.0 <= p <= bound


def test_sinr_process_validation():
    with pytest.raises(ValueError):
        SinrProcessParams(0, 0, 0.0, 1.0)
    with pytest.raises(ValueError):
        SinrProcessParams(0, 0, 1.0, 1.0, 1.5)


# ---------------------------------------------------------------------------
# S2 probability and the S2 -> S1 transition


def test_state2_examples():
    assert state2_probability(0.9, 0, 0, 0, 0).value == 0.0
    assert state2_probability(1.0, 0.5, 0, 0, 0) == (0.5, False)
    clamped = state2_probability(0.8, 0.5, 0.3, 0.2, 0.3)  # bracket 1.3
    assert clamped.value == pytest.approx(0.8) and clamped.clamped


def test_transition_examples():
    assert transition_prob_s2_to_s1(TransitionFactors(p_sinr=0.8, p_access=0.5, p_not_full=0.75,
                                                      p_dwell_ok=0.75)) == pytest.approx(0.225)
    assert transition_prob_s2_to_s1(TransitionFactors(p_sinr=1, p_access=1, p_not_full=1, p_dwell_ok=1)) == 1.0


def test_conditional_factor_undefined_when_s2_impossible():
    f = TransitionFactors(p_access=1.0, p_not_full=1.0, p_dwell_ok=1.0, p_phantom_low_prev=0.0)
    with pytest.raises(UndefinedConditionalError):
        conditional_sinr_factor(f)


def test_conditional_factor_value():
    f = TransitionFactors(p_access=0.5, p_macro_ok=1.0, p_phantom_above=0.4, p_phantom_low_prev=0.2,
                          p_joint_cross=0.1)
    # numerator 0.4 * 0.5 + 0.1, denominator 0.5 + 0.2
    assert conditional_sinr_factor(f).value == pytest.approx(0.3 / 0.7)


# ---------------------------------------------------------------------------
# Markov chain

EXAMPLE_P = np.array([[0.9, 0.2, 0.0], [0.1, 0.7, 0.3], [0.0, 0.1, 0.7]])


def test_identity_chain_has_no_unique_distribution():
    with pytest.raises(MultiplicityError):
        stationary_distribution(MarkovModel(np.eye(3)))


def test_uniform_chain():
    assert np.allclose(stationary_distribution(MarkovModel(np.full((3, 3), 1 / 3))), 1 / 3, atol=1e-12)


def test_stationary_matches_matrix_power():
    pi = stationary_distribution(MarkovModel(EXAMPLE_P))
    brute = np.linalg.matrix_power(EXAMPLE_P, 1000) @ np.array([1.0, 0.0, 0.0])
    assert np.max(np.abs(pi - brute)) < 1e-9
    assert np.allclose(pi, [0.6, 0.3, 0.1], atol=1e-12)


@st.composite
def column_stochastic(draw):
    cols = []
    for _ in range(3):
        w = [draw(st.floats(0.01, 1.0)) for _ in range(3)]
        cols.append(np.array(w) / sum(w))
    return np.column_stack(cols)


@settings(max_examples=150, deadline=None)
@given(P=column_stochastic())
def test_stationary_properties(P):
    pi = stationary_distribution(MarkovModel(P))
    assert np.max(np.abs(P @ pi - pi)) < 1e-9
    assert abs(pi.sum() - 1.0) < 1e-12
    assert np.all(pi >= 0)


def test_rejects_row_stochastic_matrix():
    with pytest.raises(ValueError):
        MarkovModel(np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]]))


def test_estimate_static_user():
    m = estimate_markov_from_simulation(None, ["S1"] * 10)
    assert np.array_equal(m.P, np.eye(3))
    assert m.flagged == (1, 2)


def test_estimate_all_s3():
    m = estimate_markov_from_simulation([], np.full((20, 3), 2))
    assert m.flagged == (0, 1)
    assert m.P[2, 2] == 1.0


def test_estimate_empty_trace():
    with pytest.raises(DataError):
        estimate_markov_from_simulation(None, [])


def test_estimate_round_trip():
    model = MarkovModel(EXAMPLE_P)
    trace = sample_markov_trace(model, 1_000_000, np.random.default_rng(2))
    est = estimate_markov_from_simulation(None, trace)
    assert np.max(np.abs(est.P - EXAMPLE_P)) <= 0.005
    assert np.allclose(est.P.sum(axis=0), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 1000), users=st.integers(1, 5))
def test_estimate_columns_sum_to_one(seed, users):
    trace = np.random.default_rng(seed).integers(0, 3, (30, users))
    est = estimate_markov_from_simulation(None, trace)
    assert np.all(np.abs(est.P.sum(axis=0) - 1.0) <= 1e-12)


def test_assemble_fills_diagonal():
    m = MarkovModel.assemble(0.3)
    assert np.allclose(m.P.sum(axis=0), 1.0)
    assert m.P[0, 1] == 0.3


# ---------------------------------------------------------------------------
# one-call evaluation


def test_evaluate_guard_example():
    out = evaluate(AnalysisParams(T=2, g=1))
    assert out["blocking_probability"] == pytest.approx(0.25)
    assert out["p_not_full"] == pytest.approx(0.75)
    assert np.allclose(out["P"].sum(axis=0), 1.0)
    assert abs(out["stationary"].sum() - 1.0) < 1e-12


def test_evaluate_zero_access_blocks_transition():
    out = evaluate(AnalysisParams(access_probability=0.0))
    assert out["p_ho_12"] == 0.0
