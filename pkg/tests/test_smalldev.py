import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from pvarlevy.fixtures import one_sided_stable, symmetric_stable
from pvarlevy.levy import ModelError, decompensate, sample_path, sample_stable_subordinator
from pvarlevy.pvar import pvar_exact
from pvarlevy.smalldev import (DeviationEstimate, StableSmallBallParams, conditioned_draw,
                               log_conditioned_witness_probability, construct_witness_dim1,
                               debruijn_rate, estimate_small_deviation, gamma_jump_sum,
                               log_cdf_half_stable, stated_small_ball_limit, pvar_samples,
                               round_half_away, scaled_log_prob, skeleton_path,
                               stable_small_ball_constant, subordinator_scale,
                               verify_witness_skeleton, wilson, witness_bound)


def test_wilson_contains_estimate():
    for hits, n in [(0, 10), (3, 10), (10, 10), (517, 1000)]:
        lo, hi = wilson(hits, n)
        assert lo <= hits / n <= hi
    assert wilson(0, 50)[0] == 0.0


def test_deviation_estimate_fields():
    e = DeviationEstimate(0.5, 1.0, 1.5, 7, 20, 1e-2, 3)
    assert e.prob == 0.35 and e.ci95[0] <= 0.35 <= e.ci95[1]
    assert set(e.to_dict()) >= {"epsilon", "T", "p", "hits", "trials", "prob", "ci95"}


def test_estimate_independent_of_workers():
    m = symmetric_stable(2, 1.5, 0.05)
    a = estimate_small_deviation(m, 1.0, 1.8, 0.6, 40, 2e-2, seed=11, workers=1)
    b = estimate_small_deviation(m, 1.0, 1.8, 0.6, 40, 2e-2, seed=11, workers=2)
    assert a.hits == b.hits and 0 < a.hits < 40


def test_estimate_rejects_divergent_p():
    with pytest.raises(ModelError):
        estimate_small_deviation(symmetric_stable(1, 1.5), 1.0, 1.2, 1.0, 10, 0.1, 1)


def test_probability_nondecreasing_in_p():
    # larger p gives a smaller p-variation on every path
    m = symmetric_stable(1, 1.2, 0.1)
    vals = {p: pvar_samples(m, 1.0, p, 200, 1e-2, 4) for p in (1.3, 1.6, 1.9)}
    assert np.all(vals[1.6] <= vals[1.3] * (1 + 1e-12))
    assert np.all(vals[1.9] <= vals[1.6] * (1 + 1e-12))
    probs = [np.mean(vals[p] < 0.5) for p in (1.3, 1.6, 1.9)]
    assert probs == sorted(probs)


def test_stable_ball_identity():
    m = symmetric_stable(2, 0.5, 0.5, k=5)
    for i in range(20):
        path = sample_path(m, 1.0, 1e-3, 8, i)
        # pvar_exact takes p >= 1, so gamma = 1 is the testable end of (beta, 1]
        assert pvar_exact(path, 1.0).value_p == pytest.approx(gamma_jump_sum(path, 1.0), rel=1e-9)
        assert pvar_exact(path, 1.5).value_p >= gamma_jump_sum(path, 1.5) * (1 - 1e-12)


def test_subordinator_law_of_jump_sums():
    # jumps below eta shift the sum by at most c eta^(g-b)/(g-b) = 6e-3 on average
    beta, g, c = 0.5, 1.0, 1.0
    m = symmetric_stable(1, beta, c / 2, big_jumps=True)
    sums = np.array([gamma_jump_sum(sample_path(m, 1.0, 1e-5, 21, i), g) for i in range(10_000)])
    params = StableSmallBallParams(beta, g, c)
    ref = sample_stable_subordinator(params.delta, subordinator_scale(params), seed=99, size=10_000)
    assert ks_2samp(sums, ref).pvalue > 0.01


def test_stable_constant_half():
    c = stable_small_ball_constant(StableSmallBallParams(0.5, 1.0, 1.0))
    assert c == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12, abs=1e-12)


def test_exact_rate_for_half_stable():
    # P[S < eps] = erfc(a / (2 sqrt(eps))) gives -eps log P -> a^2 / 4
    a = 1.7
    eps = 1e-8
    assert -eps * log_cdf_half_stable(eps, a) == pytest.approx(a * a / 4, rel=1e-6)
    assert debruijn_rate(0.5, a) == pytest.approx(a * a / 4, rel=1e-14)


def test_scaled_log_prob_converges_to_exact_rate():
    params = StableSmallBallParams(0.5, 1.0, 1.0)
    vals = scaled_log_prob(params, [1e-2, 1e-4, 1e-6])
    target = debruijn_rate(0.5, subordinator_scale(params))
    errs = np.abs(vals - target)
    assert np.all(np.diff(errs) < 0) and errs[-1] / target < 1e-5


def test_scaled_log_prob_only_half():
    with pytest.raises(ValueError):
        scaled_log_prob(StableSmallBallParams(0.5, 0.8, 1.0), [1e-3])


def test_stated_limit_value():
    assert stated_small_ball_limit(StableSmallBallParams(0.5, 1.0, 1.0)) == pytest.approx(
        math.sqrt(math.pi) / 2, rel=1e-12)


def test_round_half_away():
    assert [round_half_away(x) for x in (2.5, -2.5, 0.49, 1.5, -0.5)] == [3, -3, 0, 2, -1]


def test_witness_trivial_when_k_full():
    m = decompensate(one_sided_stable(0.5))
    w = construct_witness_dim1(m, 1.0, 1.5, 0.3, 1e-3)
    assert w.gamma == 0 and w.feasible
    ok, total = verify_witness_skeleton(w, 1.5, 0.3)
    assert ok and total == pytest.approx(witness_bound(w, 1.5), rel=1e-12)


def test_witness_saw_case():
    m = decompensate(one_sided_stable(1.5, 0.1))
    w = construct_witness_dim1(m, 1.0, 1.9, 1.0, 1e-2)
    assert w.gamma > 100 and w.feasible and 0 < w.lam <= 1.0 / (4 * w.gamma)
    assert np.linalg.norm(w.x) < w.eta
    ok, total = verify_witness_skeleton(w, 1.9, 1.0)
    assert ok and total <= witness_bound(w, 1.9) + 1e-12
    # the saw jumps cancel the compensator drift up to rounding of gamma
    sk = skeleton_path(w)
    assert abs(sk.values[-1, 0]) <= float(np.linalg.norm(w.x))
    assert math.isfinite(log_conditioned_witness_probability(m, w))
    vals = [pvar_exact(conditioned_draw(m, w, 5, i, floor_ratio=None), 1.9).value for i in range(10)]
    assert max(vals) < 1.0


def test_witness_bound_increases_with_lambda():
    m = decompensate(one_sided_stable(1.5, 0.1))
    w = construct_witness_dim1(m, 1.0, 1.9, 1.0, 1e-2)
    assert witness_bound(w, 1.9, w.lam / 2) < witness_bound(w, 1.9, w.lam)


def test_witness_rejects_large_l():
    with pytest.raises(ModelError):
        construct_witness_dim1(decompensate(symmetric_stable(2, 1.5)), 1.0, 1.8, 1.0, 1e-2)


def test_conditioned_draw_deterministic():
    m = decompensate(one_sided_stable(1.5, 0.1))
    w = construct_witness_dim1(m, 1.0, 1.9, 1.0, 1e-2)
    a, b = conditioned_draw(m, w, 3, 1), conditioned_draw(m, w, 3, 1)
    assert np.array_equal(a.values, b.values)
