import json
import math

import numpy as np
import pytest
from scipy.special import erfc

from pvarlevy.core_path import CadlagPath, Subspace
from pvarlevy.fixtures import (OCTANT_THRESHOLD, circle_directions, discretize_density,
                               counterexample_model, octant_model, one_sided_stable, strictly_stable,
                               symmetric_stable)
from pvarlevy.levy import (LevyModel, ModelError, StableComponent, _rng, check_pvariation,
                           cone_geometry, corollary_a_classify, decompensate, generalized_drift,
                           load_model, model_from_dict, sample_jumps, sample_path,
                           sample_stable_subordinator, with_budget)
from pvarlevy.pvar import one_variation_decomposed, pvar_exact


def atom_model(alpha=(1.0, 1.0)):
    return LevyModel(alpha, [[1.0, 0.0]], [1.0])


def test_check_pvariation_examples():
    assert check_pvariation(LevyModel([0.0, 0.0], [[1.0, 0.0]], [2.0]), 1.5) == 2.0
    assert check_pvariation(one_sided_stable(0.5), 1.0) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ModelError):
        check_pvariation(one_sided_stable(1.5), 1.2)
    assert with_budget(one_sided_stable(0.5), 1.0).p_moment_budget == pytest.approx(2.0)


def test_generalized_drift_examples():
    assert np.allclose(generalized_drift(atom_model()), [0.0, 1.0])
    heavy = symmetric_stable(2, 1.5).with_drift([0.3, -0.2])
    assert np.allclose(generalized_drift(heavy), [0.3, -0.2])
    m = strictly_stable(2, 0.5, [[1.0, 0.0]], [1.0])
    assert np.allclose(m.alpha, [2.0, 0.0])
    assert np.allclose(generalized_drift(m), 0, atol=1e-12)


def test_decompensate_examples():
    m = strictly_stable(2, 0.5, [[0.6, 0.8]], [1.0])
    assert np.allclose(decompensate(m).alpha, m.alpha)
    d = decompensate(atom_model())
    assert np.allclose(d.alpha, [1.0, 0.0])
    assert np.allclose(decompensate(d).alpha, d.alpha)
    assert np.allclose(generalized_drift(d), 0, atol=1e-12)


@pytest.mark.parametrize("model", [atom_model(), one_sided_stable(0.5, 2.0, 1.0), counterexample_model(),
                                   octant_model(3.0, 6, 8)])
def test_decompensate_fixed_point(model):
    assert np.max(np.abs(generalized_drift(decompensate(model)))) <= 1e-12


def test_declared_k_must_be_light():
    comp = StableComponent(1.5, [[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0])
    with pytest.raises(ModelError):
        LevyModel([0.0, 0.0], np.zeros((0, 2)), [], (comp,), Subspace.full(2), Subspace.zero(2))
    with pytest.raises(ModelError):  # L too big
        LevyModel([0.0, 0.0], np.zeros((0, 2)), [], (comp,), Subspace.zero(2), Subspace.full(2))
    ok = LevyModel([0.0, 0.0], np.zeros((0, 2)), [], (comp,), Subspace([[0.0, 1.0]]),
                   Subspace([[1.0, 0.0]]))
    assert ok.L.rank == 1


def test_no_jumps_path():
    m = LevyModel([1.0, 0.0], np.zeros((0, 2)), [])
    path = sample_path(m, 2.0, 0.1, seed=1)
    assert path.values[-1].tolist() == [2.0, 0.0] and not path.has_jumps


def test_sample_path_deterministic():
    m = symmetric_stable(2, 1.5, 0.1)
    a, b = sample_path(m, 1.0, 1e-2, 42), sample_path(m, 1.0, 1e-2, 42)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)
    c = sample_path(m, 1.0, 1e-2, 42, task=1)
    assert not np.array_equal(a.values[-1], c.values[-1])


def test_sample_path_rejects_eta():
    with pytest.raises(ModelError):
        sample_path(atom_model(), 1.0, 0.0, 1)


def test_poisson_count_statistics():
    lam, T, n = 3.0, 2.0, 100_000
    m = LevyModel([0.0, 0.0], [[0.5, 0.0]], [lam])
    counts = np.array([int(np.sum(sample_path(m, T, 0.1, s).kinds == 1)) for s in range(n)])
    assert abs(counts.mean() - lam * T) <= 3 * math.sqrt(lam * T / n)


def test_truncated_drift_compensates():
    # one-sided beta=1.5: the mean of Z^eta at T equals alpha T
    m = one_sided_stable(1.5, 0.5, alpha=0.2)
    ends = np.array([sample_path(m, 1.0, 0.05, 9, i).values[-1, 0] for i in range(4000)])
    assert abs(ends.mean() - 0.2) < 3 * ends.std() / math.sqrt(len(ends))


def test_truncation_decomposition_on_samples():
    m = decompensate(one_sided_stable(0.5, 1.0, 0.0).with_drift([0.7]))
    for i in range(20):
        path = sample_path(m, 1.0, 1e-3, 5, i)
        slope = (path.values[1] - path.values[0]) / (path.times[1] - path.times[0])
        jumps = [(t, path.values[j + 1] - path.values[j])
                 for j, t in enumerate(path.times) if path.kinds[j] == 1]
        expect = one_variation_decomposed(slope, jumps, 1.0)
        assert pvar_exact(path, 1.0).value == pytest.approx(expect, rel=1e-9)


def test_truncation_error_trend():
    # E pvar^p of the dropped small jumps scales like the tail integral eta^(p - beta)
    m = symmetric_stable(1, 0.5, 1.0)
    p, ratios = 1.5, []
    for eta in (0.2, 0.05, 0.0125):
        vals = []
        for i in range(400):
            rng = _rng(17, i)
            t, z = sample_jumps(m, 1.0, eta / 50, eta, rng)
            path = CadlagPath.from_drift_and_jumps([0.0], t, z, 1.0)
            vals.append(pvar_exact(path, p).value_p)
        tail = 2 * eta ** (p - 0.5) / (p - 0.5)
        ratios.append(np.mean(vals) / tail)
    assert max(ratios) / min(ratios) < 1.5


def test_subordinator_cdf_and_laplace():
    a, n = 1.3, 1_000_000
    s = sample_stable_subordinator(0.5, a, seed=3, size=n)
    for eps in (0.5, 1.0, 2.0):
        p = erfc(a / (2 * math.sqrt(eps)))
        assert abs(np.mean(s < eps) - p) <= 3 * math.sqrt(p * (1 - p) / n)
    lap = np.exp(-s)
    assert abs(lap.mean() - math.exp(-a)) <= 3 * lap.std() / math.sqrt(n)


def test_subordinator_scaling():
    one = sample_stable_subordinator(0.7, 1.0, seed=5, size=100)
    two = sample_stable_subordinator(0.7, 2.5, seed=5, size=100)
    assert np.allclose(two, 2.5 ** (1 / 0.7) * one, rtol=1e-12)


def test_classifier_cases():
    strict = strictly_stable(2, 0.5, circle_directions(4), [1.0] * 4)
    assert corollary_a_classify(strict, 1.5).case == "K_full_drift_zero"
    assert corollary_a_classify(symmetric_stable(2, 1.5), 1.8).case == "L_full"
    assert corollary_a_classify(one_sided_stable(0.5), 1.5).case == "K_full_drift_nonzero"
    assert corollary_a_classify(octant_model(OCTANT_THRESHOLD + 0.3), 1.5).case == "outside_BK"
    assert corollary_a_classify(octant_model(OCTANT_THRESHOLD - 0.3), 1.5).case == "strict_cone_yes"
    # the counterexample's limit cone contains a line, so the test cannot decide
    assert corollary_a_classify(counterexample_model(), 2.0).case == "inconclusive"


def test_octant_threshold_from_moments():
    m = octant_model(0.0, 48, 192)
    assert -generalized_drift(m)[0] == pytest.approx(OCTANT_THRESHOLD, rel=1e-4)


def test_cone_geometry_contains_generators():
    m = symmetric_stable(2, 1.5, k=3)
    cone = cone_geometry(m, 0.1)
    for g in cone.generators:
        assert cone.contains(g)
    assert cone.contains([0.0, 0.0])
    gens = cone_geometry(LevyModel([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]), 2.0)
    assert gens.contains([1.0, 1.0]) and not gens.contains([-1.0, 0.5])


def test_discretize_density_moments():
    pts, w = discretize_density(lambda z: np.ones(len(z)), [0.0, 0.0], [1.0, 2.0], [3, 4])
    assert w.sum() == pytest.approx(2.0, rel=1e-12)
    assert (w @ pts) == pytest.approx([1.0, 2.0], rel=1e-12)


def test_model_json_round_trip(tmp_path):
    m = decompensate(symmetric_stable(2, 1.5, 0.3).with_drift([0.1, 0.2]))
    f = tmp_path / "m.json"
    m.to_json(f)
    back = load_model(f)
    assert np.allclose(back.alpha, m.alpha)
    assert back.stable[0].beta == 1.5 and back.L.rank == 2


def test_model_unknown_field_rejected():
    data = atom_model().to_dict()
    data["colour"] = "red"
    with pytest.raises(ModelError):
        model_from_dict(data)
    data = atom_model().to_dict()
    data["schema"] = 2
    with pytest.raises(ModelError):
        model_from_dict(data)


def test_model_spec_layout():
    data = {"dimension": 1, "alpha": [0.0], "atoms": [],
            "stable": {"beta": 0.5, "sphere": [{"direction": [1.0], "weight": 1.0}]},
            "K_basis": [[1.0]], "L_basis": []}
    m = model_from_dict(json.loads(json.dumps(data)))
    assert check_pvariation(m, 1.0) == pytest.approx(2.0)
