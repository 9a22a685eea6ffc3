import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzdetect.channel import AttackParams
from byzdetect.detectors import (
    FusionContext,
    decide,
    estimate_attack_parameter,
    glrt_decide,
    glrt_group_weights,
    glrtrs_batch,
    glrtrs_decide,
    lmpt_decide,
    lmpt_threshold,
    lmpt_weights,
    lmptrs_decide,
    lmptrs_weights,
    lrt_decide,
    lrt_statistic,
    mle_sparsity,
    x_hat_from_counts,
)
from byzdetect.reputation import (
    ReputationState,
    effective_attack,
    enhanced_decide,
    record_reports,
    reputation_filter,
    residual_alpha,
)
from byzdetect.sensing import Hypothesis, SensorBank, SignalModel, full_thresholds, make_reference_thresholds, SensorSpec

import oracles

H0, H1 = Hypothesis.H0, Hypothesis.H1
MODEL = SignalModel(0.1)
T1 = full_thresholds([-0.6])
T2 = full_thresholds([-1.0, 0.0, 1.0])


def bank(n, thresholds=T1, gain2=1.0):
    return SensorBank.homogeneous(n, thresholds, gain2)


def mixed_bank():
    return SensorBank(np.array([T2, full_thresholds([-0.5, 0.2, 1.5]), T2]), np.array([1.0, 2.0, 0.5]))


def random_config(rng):
    q = int(rng.choice([1, 2, 3]))
    inner = np.sort(rng.uniform(-2.5, 2.5, 2**q - 1))
    while np.any(np.diff(inner) < 0.05):
        inner = np.sort(rng.uniform(-2.5, 2.5, 2**q - 1))
    model = SignalModel(0.0, sigma_x2=float(rng.uniform(0.5, 8)), sigma_n2=float(rng.uniform(0.5, 2)))
    return full_thresholds(inner), float(rng.uniform(0.2, 3)), model


# ---------------------------------------------------------------------------
# LRT
# ---------------------------------------------------------------------------


def test_lrt_zero_sparsity_is_zero():
    rng = np.random.default_rng(0)
    r = rng.integers(1, 3, size=20)
    assert lrt_statistic(r, SignalModel(0.0), AttackParams(0.3, 0.5), bank(20)) == 0.0


def test_lrt_single_sensor_one_term():
    # H1 only widens the observation, so the pmfs (0.4, 0.6) / (0.45, 0.55) are realizable
    from scipy import stats

    tau = stats.norm.ppf(0.4)
    sx2 = (tau / stats.norm.ppf(0.45)) ** 2 - 1.0
    model = SignalModel(1.0, sigma_x2=sx2)
    b = bank(1, full_thresholds([tau]))
    np.testing.assert_allclose(b.pmfs(model, H0)[0], [0.4, 0.6], atol=1e-12)
    np.testing.assert_allclose(b.pmfs(model, H1)[0], [0.45, 0.55], atol=1e-12)
    assert abs(lrt_statistic([2], model, AttackParams(0.0, 0.0), b) - math.log(0.55 / 0.6)) < 1e-12


def test_lrt_matches_brute_force_n3():
    sensors = mixed_bank()
    attack = AttackParams(0.3, 0.6)
    f1 = [oracles.report_pmf(sensors.thresholds[i], MODEL.p, attack.x, sensors.gain2[i]) for i in range(3)]
    f0 = [oracles.report_pmf(sensors.thresholds[i], 0.0, attack.x, sensors.gain2[i]) for i in range(3)]
    for u in oracles.enumerate_reports(3, 4):
        ratio = math.prod(f1[i][u[i] - 1] for i in range(3)) / math.prod(f0[i][u[i] - 1] for i in range(3))
        assert abs(lrt_statistic(u, MODEL, attack, sensors) - math.log(ratio)) < 1e-12


def test_lrt_bayes_threshold():
    v = lrt_decide([1, 2], MODEL, AttackParams(0.3, 0.5), bank(2), target_pfa=None, priors=(0.7, 0.3))
    assert v.threshold == pytest.approx(math.log(0.7 / 0.3), abs=1e-15)


def test_lrt_zero_probability_codeword_raises():
    with pytest.raises(ValueError):
        lrt_statistic([1], MODEL, AttackParams(0.0, 0.0), bank(1, full_thresholds([-60.0])))


# ---------------------------------------------------------------------------
# GLRT
# ---------------------------------------------------------------------------


def test_glrt_h0_reports_give_small_p_hat():
    rng = np.random.default_rng(1)
    sensors = bank(5000)
    r = np.where(rng.random(5000) < sensors.pmfs(MODEL, H0)[0, 0], 1, 2)
    v = glrt_decide(r, MODEL, sensors)
    assert v.p_hat < 0.02
    assert abs(v.statistic) < 5000 * 0.01


def test_glrt_zero_p_hat_gives_zero_weights():
    ctx = FusionContext(MODEL, bank(3))
    assert np.all(glrt_group_weights(ctx, 0.0) == 0.0)


def test_glrt_manual_recomputation_n3():
    sensors = bank(3, full_thresholds([-0.6]))
    reports = np.array([1, 2, 2])
    v = glrt_decide(reports, MODEL, sensors)
    # dense likelihood grid, then refine, for p_hat
    grid = np.linspace(0, 0.5, 50_001)
    ll = [sum(math.log(oracles.cells(T1, oracles.beta(p))[u - 1]) for u in reports) for p in grid]
    p_grid = grid[int(np.argmax(ll))]
    assert abs(v.p_hat - p_grid) < 2e-5
    g = oracles.cells(T1, oracles.beta(v.p_hat)) - oracles.cells(T1, 1.0)
    assert abs(v.statistic - sum(g[u - 1] for u in reports)) < 1e-12


def test_glrt_external_threshold():
    v = glrt_decide([1, 2, 2], MODEL, bank(3), threshold=10.0)
    assert v.threshold == 10.0 and not v.decide_h1


def test_mle_sparsity_batch_elements_independent():
    ctx = FusionContext(MODEL, bank(200))
    rng = np.random.default_rng(2)
    counts = np.stack([ctx.counts(rng.integers(1, 3, (1, 200)))[0] for _ in range(4)])
    together = mle_sparsity(ctx, counts, np.array([0.0, 0.1, 0.2, 0.3]))
    for i, x in enumerate([0.0, 0.1, 0.2, 0.3]):
        assert mle_sparsity(ctx, counts[i : i + 1], x)[0] == together[i]


def test_reports_out_of_range_raise():
    with pytest.raises(ValueError):
        glrt_decide([0, 1, 2], MODEL, bank(3))
    with pytest.raises(ValueError):
        FusionContext(MODEL, bank(3)).counts([[1, 2]])


# ---------------------------------------------------------------------------
# LMPT
# ---------------------------------------------------------------------------


def test_lmpt_zero_gain_gives_zero_weights():
    assert np.all(lmpt_weights(MODEL, bank(3, T2, gain2=0.0)) == 0.0)


def test_lmpt_single_zero_threshold_is_non_informative():
    assert np.all(lmpt_weights(MODEL, bank(2, full_thresholds([0.0]))) == 0.0)


def _log_pmf(thresholds, gain2, model, x, p):
    return np.log(oracles.report_pmf(thresholds, p, x, gain2, model.sigma_x2, model.sigma_n2))


def _fd_forward(thresholds, gain2, model, x, delta=1e-6):
    return (_log_pmf(thresholds, gain2, model, x, delta) - _log_pmf(thresholds, gain2, model, x, 0.0)) / delta


def _fd_second_order(thresholds, gain2, model, x, delta=1e-5):
    # one-sided three-point stencil, exact through quadratic terms, p stays >= 0
    f = [_log_pmf(thresholds, gain2, model, x, k * delta) for k in range(3)]
    return (-3 * f[0] + 4 * f[1] - f[2]) / (2 * delta)


def test_lmpt_weights_forward_difference_at_default_model():
    sensors = bank(1, T2)
    fd = _fd_forward(T2, 1.0, MODEL, 0.0)
    np.testing.assert_allclose(lmpt_weights(MODEL, sensors)[0], fd, rtol=1e-4)


def test_lmptrs_weights_forward_difference_at_default_model():
    for x in (0.1, 0.3, 0.6):
        fd = _fd_forward(T2, 1.0, MODEL, x)
        np.testing.assert_allclose(lmptrs_weights(MODEL, bank(1, T2), x)[0], fd, rtol=1e-4)


def test_lmpt_weights_match_finite_difference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t, g, model = random_config(rng)
        w = lmpt_weights(model, bank(1, t, g))[0]
        np.testing.assert_allclose(w, _fd_second_order(t, g, model, 0.0), rtol=1e-4, atol=1e-9)


def test_lmptrs_weights_match_finite_difference():
    rng = np.random.default_rng(4)
    for _ in range(50):
        t, g, model = random_config(rng)
        x = float(rng.uniform(0, 0.9))
        w = lmptrs_weights(model, bank(1, t, g), x)[0]
        np.testing.assert_allclose(w, _fd_second_order(t, g, model, x), rtol=1e-4, atol=1e-9)


def test_lmptrs_zero_x_equals_lmpt():
    for sensors in (bank(4, T2), mixed_bank()):
        np.testing.assert_allclose(lmptrs_weights(MODEL, sensors, 0.0), lmpt_weights(MODEL, sensors), rtol=0, atol=1e-12)


def test_lmptrs_q1_sign_flip_past_half():
    w_lo = lmptrs_weights(MODEL, bank(1), 0.2)[0]
    w_hi = lmptrs_weights(MODEL, bank(1), 0.8)[0]
    assert np.all(np.sign(w_lo) == -np.sign(w_hi))
    assert np.all(lmptrs_weights(MODEL, bank(1), 0.5) == 0.0)


@settings(max_examples=200)
@given(st.floats(0, 0.99), st.sampled_from([T1, T2]))
def test_lmptrs_weights_continuous_in_x(x, t):
    a = lmptrs_weights(MODEL, bank(1, t), x)
    b = lmptrs_weights(MODEL, bank(1, t), min(x + 1e-7, 0.99))
    assert np.max(np.abs(a - b)) < 1e-4


def test_lmpt_decide_examples():
    w = np.zeros((3, 2))
    assert lmpt_decide([1, 2, 1], w, 0.0).statistic == 0.0
    w = lmpt_weights(MODEL, bank(1, T2))
    assert lmpt_decide([3], w, 0.0).statistic == w[0, 2]


def test_lmpt_matches_derivative_sum_n4():
    # d/dp sum_i log A_{i,u_i}(p) at p = 0 by central differences
    sensors = SensorBank(np.array([T2, T2, full_thresholds([-0.5, 0.2, 1.5]), T2]), np.array([1.0, 2.0, 0.5, 1.0]))
    w = lmpt_weights(MODEL, sensors)
    u = np.array([1, 4, 2, 3])
    h = 1e-7

    def loglik(p):
        return sum(math.log(oracles.cells(sensors.thresholds[i], oracles.beta(p, sensors.gain2[i]))[u[i] - 1]) for i in range(4))

    deriv = (loglik(h) - loglik(0.0)) / h
    assert abs(lmpt_decide(u, w, 0.0).statistic - deriv) < 1e-4 * abs(deriv)


def test_lmpt_threshold_calibrated_under_gaussian_model():
    from byzdetect.analysis import statistic_moments

    sensors = bank(200, T2)
    w = lmpt_weights(MODEL, sensors)
    m = statistic_moments(w, sensors.pmfs(MODEL, H0), sensors.pmfs(MODEL, H0))
    thr = lmpt_threshold(MODEL, sensors, 0.4)
    assert abs(thr - (0.2533471031357997 * math.sqrt(m.var_h0) + m.mean_h0)) < 1e-9


# ---------------------------------------------------------------------------
# reference estimator
# ---------------------------------------------------------------------------


def test_estimator_examples():
    r = np.array([2] * 56 + [1] * 24)
    assert estimate_attack_parameter(r, 1) == pytest.approx(0.30, abs=1e-15)
    assert estimate_attack_parameter(np.full(80, 4), 2) == 0.0
    assert estimate_attack_parameter(np.full(80, 1), 2, mirror=True) == 0.0
    with pytest.raises(ValueError):
        estimate_attack_parameter([], 1)
    with pytest.raises(ValueError):
        x_hat_from_counts(0, 0)


def test_estimator_monte_carlo_efficiency():
    x, n, runs = 0.15, 8000, 200
    rng = np.random.default_rng(2024)
    est = np.array([estimate_attack_parameter(np.where(rng.random(n) < x, 1, 2), 1) for _ in range(runs)])
    crlb = x * (1 - x) / n
    assert abs(est.mean() - x) < 3 * math.sqrt(crlb)
    assert abs(est.var(ddof=1) / crlb - 1.0) < 0.15


# ---------------------------------------------------------------------------
# RS detectors and collapse identities
# ---------------------------------------------------------------------------


def _reports(n, k, seed):
    return np.random.default_rng(seed).integers(1, k + 1, size=n)


def test_glrtrs_zero_x_collapses_to_glrt():
    for sensors, k in ((bank(50), 2), (bank(50, T2), 4)):
        r = _reports(50, k, 5)
        ref = np.full(80, k)
        a = glrtrs_decide(r, ref, MODEL, sensors)
        b = glrt_decide(r, MODEL, sensors)
        assert a.x_hat == 0.0
        assert abs(a.statistic - b.statistic) < 1e-12
        assert abs(a.threshold - b.threshold) < 1e-12


def test_glrtrs_weights_reduce_to_glrt_weights_at_zero_x():
    ctx = FusionContext(MODEL, bank(3, T2))
    p = np.array([0.07])
    g = oracles.cells(T2, oracles.beta(0.07)) - oracles.cells(T2, 1.0)
    np.testing.assert_allclose(glrt_group_weights(ctx, p, 0.0)[0, 0], g, atol=1e-15)


def test_glrtrs_zero_p_hat_gives_zero_statistic_and_threshold():
    # v_2 is the inner cell, which loses mass as p grows, so all-v_2 reports give p_hat = 0
    sensors = bank(30, T1)
    v = glrtrs_decide(np.full(30, 2), np.full(80, 2), MODEL, sensors)
    assert v.p_hat < 1e-5
    assert abs(v.statistic) < 1e-5 and abs(v.threshold) < 1e-5


def test_exact_tie_goes_to_h0():
    assert not decide(0.0, 0.0)
    assert decide(1e-300, 0.0)


def test_lmptrs_zero_x_collapses_to_lmpt():
    sensors = bank(60, T2)
    r = _reports(60, 4, 6)
    a = lmptrs_decide(r, np.full(80, 4), MODEL, sensors)
    w = lmpt_weights(MODEL, sensors)
    b = lmpt_decide(r, w, lmpt_threshold(MODEL, sensors, 0.4))
    assert abs(a.statistic - b.statistic) < 1e-12
    assert abs(a.threshold - b.threshold) < 1e-12


def test_glrtrs_statistic_uses_attack_aware_weights():
    sensors = bank(3, T1)
    r = np.array([1, 2, 2])
    ref = np.array([2] * 70 + [1] * 10)
    v = glrtrs_decide(r, ref, MODEL, sensors)
    x = 10 / 80
    f = oracles.report_pmf(T1, v.p_hat, x) - oracles.report_pmf(T1, 0.0, x)
    assert abs(v.statistic - sum(f[u - 1] for u in r)) < 1e-12


# ---------------------------------------------------------------------------
# reputation filter and E-detectors
# ---------------------------------------------------------------------------


def _state_from_pmfs(pmfs, t, alpha=0.3):
    s = ReputationState.initial(len(pmfs), len(pmfs[0]), alpha)
    s.counts = np.asarray(pmfs, dtype=float) * t
    s.t = t
    return s


def test_filter_keeps_honest_drops_flipper():
    p1 = SignalModel(0.05)
    a0 = bank(1).pmfs(MODEL, H0)[0]
    a1 = bank(1).pmfs(p1, H1)[0]
    s = _state_from_pmfs([a0, a0[::-1]], 1000)
    keep = reputation_filter(s, np.stack([a0, a0]), np.stack([a1, a1]), 0.5)
    np.testing.assert_array_equal(keep, [True, False])


def test_filter_zero_threshold_cannot_separate():
    # with a threshold at 0 the honest pmf is its own complement
    a = np.array([0.5, 0.5])
    s = _state_from_pmfs([a, a[::-1]], 100)
    assert np.all(reputation_filter(s, np.stack([a, a]), np.stack([a, a]), 0.5))


def test_filter_infinite_tau_keeps_everyone():
    s = _state_from_pmfs([[1.0, 0.0], [0.0, 1.0]], 5)
    a = np.full((2, 2), 0.5)
    assert np.all(reputation_filter(s, a, a, np.inf))


def test_filter_monte_carlo_honest_kept():
    rng = np.random.default_rng(8)
    sensors = bank(200)
    s = ReputationState.initial(200, 2, 0.3)
    a0 = sensors.pmfs(MODEL, H0)
    for _ in range(200):
        record_reports(s, np.where(rng.random(200) < a0[:, 0], 1, 2), 2)
    assert np.all(reputation_filter(s, a0, sensors.pmfs(SignalModel(0.05), H1), 0.5))


def test_filter_preconditions():
    s = ReputationState.initial(2, 2, 0.3)
    with pytest.raises(ValueError):
        reputation_filter(s, np.ones((2, 2)), np.ones((2, 2)), 0.5)
    s.t = 1
    with pytest.raises(ValueError):
        reputation_filter(s, np.ones((2, 2)), np.ones((2, 2)), 0.0)


def test_residual_alpha_modes():
    s = ReputationState.initial(10, 2, 0.3)
    keep = np.array([False, False] + [True] * 8)
    assert residual_alpha(s, keep, 10, "current") == pytest.approx(0.1)
    s.flagged_ever[:3] = True
    assert residual_alpha(s, keep, 10, "cumulative") == pytest.approx(0.0)
    assert residual_alpha(s, keep, 10, "kept") == pytest.approx(1 / 8)
    assert residual_alpha(s, np.ones(10, bool), 10, "kept") == 0.3
    with pytest.raises(ValueError):
        residual_alpha(s, keep, 10, "bogus")


def test_residual_alpha_clamp_boundary():
    s = ReputationState.initial(10, 2, 0.3)
    keep = np.array([False] * 3 + [True] * 7)
    assert residual_alpha(s, keep, 10, "current") == 0.0
    assert residual_alpha(s, keep, 10, "kept") == 0.0
    assert residual_alpha(s, np.zeros(10, bool), 10, "current") == 0.0


def test_effective_attack():
    assert effective_attack(0.15, 0.3, 0.3) == 0.15
    assert effective_attack(0.15, 0.3, 0.1) == pytest.approx(0.05)
    assert effective_attack(0.15, 0.3, 0.0) == 0.0
    with pytest.raises(ValueError, match="inconsistent prior"):
        effective_attack(0.1, 0.0, 0.0)
    assert effective_attack(0.0, 0.0, 0.0) == 0.0


@pytest.mark.parametrize("base", ["GLRTRS", "LMPTRS"])
@pytest.mark.parametrize("history", ["inclusive", "previous"])
def test_enhanced_no_flags_collapses_to_base(base, history):
    sensors = bank(40, T2)
    ref_thr = np.asarray(make_reference_thresholds(SensorSpec(0, T2)))
    rng = np.random.default_rng(9)
    state = ReputationState.initial(40, 4, 0.3)
    refs = []
    for _ in range(3):
        r = rng.integers(1, 5, 40)
        ref = np.where(rng.random(20) < 0.1, rng.integers(1, 4, 20), 4)
        refs.append(ref)
        v, state = enhanced_decide(r, ref, state, MODEL, sensors, base=base, tau=np.inf, filter_history=history)
        all_ref = np.concatenate(refs)
        if base == "GLRTRS":
            b = glrtrs_decide(r, all_ref, MODEL, sensors)
        else:
            b = lmptrs_decide(r, all_ref, MODEL, sensors)
        assert v.x_hat == b.x_hat
        assert abs(v.statistic - b.statistic) < 1e-12
        assert abs(v.threshold - b.threshold) < 1e-12
        assert v.decide_h1 == b.decide_h1
    assert state.t == 3 and state.alpha_t == 0.3
    assert ref_thr.shape == (5,)


def test_enhanced_oracle_flags_all_byzantines():
    # keep exactly the honest sensors: alpha_t -> 0 and the fusion is attack-free over them
    n, nb = 40, 12
    sensors = bank(n, T1)
    rng = np.random.default_rng(10)
    r = rng.integers(1, 3, n)
    ref = np.array([2] * 70 + [1] * 10)
    keep = np.arange(n) >= nb
    state = ReputationState.initial(n, 2, 0.3)
    v, state = enhanced_decide(r, ref, state, MODEL, sensors, base="LMPTRS", keep_override=keep)
    assert state.alpha_t == 0.0
    honest = sensors.subset(np.flatnonzero(keep))
    w = lmpt_weights(MODEL, honest)
    b = lmpt_decide(r[keep], w, lmpt_threshold(MODEL, honest, 0.4))
    assert abs(v.statistic - b.statistic) < 1e-12
    assert abs(v.threshold - b.threshold) < 1e-12
    np.testing.assert_array_equal(v.keep_mask, keep)


def test_enhanced_does_not_mutate_input_state():
    sensors = bank(10)
    s0 = ReputationState.initial(10, 2, 0.3)
    _, s1 = enhanced_decide(np.ones(10, int), np.full(5, 2), s0, MODEL, sensors)
    assert s0.t == 0 and s1.t == 1
    assert s0.counts.sum() == 0


def test_enhanced_inconsistent_prior():
    with pytest.raises(ValueError, match="inconsistent prior"):
        enhanced_decide(np.ones(10, int), np.array([1, 2, 2]), ReputationState.initial(10, 2, 0.3), MODEL, bank(10), alpha_known=0.0)


def test_enhanced_rejects_bad_arguments():
    s = ReputationState.initial(10, 2, 0.3)
    with pytest.raises(ValueError):
        enhanced_decide(np.ones(10, int), np.full(5, 2), s, MODEL, bank(10), base="GLRT")
    with pytest.raises(ValueError):
        enhanced_decide(np.ones(10, int), np.full(5, 2), s, MODEL, bank(10), alpha_known=1.5)


def test_enhanced_deterministic():
    sensors = bank(30, T2)

    def run():
        rng = np.random.default_rng(11)
        s = ReputationState.initial(30, 4, 0.3)
        out = []
        for _ in range(5):
            v, s = enhanced_decide(rng.integers(1, 5, 30), rng.integers(3, 5, 10), s, MODEL, sensors)
            out.append((v.statistic, v.threshold, v.decide_h1, tuple(v.keep_mask)))
        return out

    assert run() == run()


def test_glrtrs_batch_matches_single_trials():
    ctx = FusionContext(MODEL, bank(25, T2))
    rng = np.random.default_rng(12)
    reports = rng.integers(1, 5, (6, 25))
    xs = rng.uniform(0, 0.5, 6)
    stat, thr, p_hat = glrtrs_batch(ctx, ctx.counts(reports), xs, 0.4)
    for i in range(6):
        s1, t1, p1 = glrtrs_batch(ctx, ctx.counts(reports[i : i + 1]), xs[i], 0.4)
        assert (s1[0], t1[0], p1[0]) == (stat[i], thr[i], p_hat[i])
