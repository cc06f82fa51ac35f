import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import pvar_pow_subsets
from pvarlevy.core_path import CadlagPath, PathError, combine, jump_arrays
from pvarlevy.pvar import (ChangeOfTime, SawParams, dyadic_slope_time_change,
                           jump_aligned_time_change, linear_path, make_saw, make_step,
                           one_variation_decomposed, partition_sum, polygonal_approx,
                           pvar_below, pvar_bruteforce, pvar_exact, pvar_norm, refine,
                           regularity_modulus, saw_pvar_p, skorohod_search, skorohod_upper,
                           step_bound)

# oracle outputs frozen from tests/oracles.py
RANDOM10_SEED7_P15_POW = 17.976921434451796
STEP6_VALUES = [0.03419276725318417, 1.3597475403099617, 1.2247210785859324,
                -0.5103070767876675, -0.2979695111064471, -0.5273841930334252]
STEP6_P2_POW = 5.351918065384848


def test_saw_example():
    out = pvar_exact(make_saw(SawParams(3, 1.0, [1.0, 0.0])), 2.0)
    assert out.value_p == pytest.approx(6.0, rel=1e-12)


def test_saw_example_1p5():
    out = pvar_exact(make_saw(SawParams(4, 2.0, [0.0, 2.0])), 1.5)
    assert out.value_p == pytest.approx(2 * 4 * 2 ** 1.5, rel=1e-9)


@pytest.mark.parametrize("p", [1.0, 1.25, 1.5, 1.99])
def test_linear_path_value(p):
    assert pvar_exact(linear_path([3.0, 4.0], 2.0), p).value == pytest.approx(10.0, rel=1e-12)


def test_random_10_node_matches_frozen_oracle():
    rng = np.random.default_rng(7)
    path = CadlagPath.polygon(np.arange(10.0), rng.normal(size=(10, 2)))
    assert pvar_exact(path, 1.5).value_p == pytest.approx(RANDOM10_SEED7_P15_POW, rel=1e-12)
    assert pvar_exact(path, 1.5).value == pvar_bruteforce(path, 1.5).value


def test_bruteforce_small_cases():
    path = CadlagPath.polygon([0.0, 1.0], [[0.0, 0.0], [0.6, 0.8]])
    assert pvar_bruteforce(path, 1.3).value == pytest.approx(1.0, rel=1e-15)
    assert pvar_bruteforce(CadlagPath.polygon([0, 1, 2], [[1.0], [1.0], [1.0]]), 1.5).value == 0


def test_bruteforce_rejects_large():
    with pytest.raises(ValueError):
        pvar_bruteforce(CadlagPath.polygon(np.arange(21.0), np.zeros(21)), 1.5)


def test_p_below_one_rejected():
    with pytest.raises(ValueError):
        pvar_exact(linear_path([1.0], 1.0), 0.9)


def test_single_node():
    assert pvar_exact(CadlagPath.polygon([0.0], [[1.0]]), 1.5).value == 0


def test_saw_shape():
    v = np.array([1.0, 2.0])
    one = make_saw(SawParams(1, 1.0, v))
    assert np.allclose(one.left_limit(1.0), v) and np.allclose(one.evaluate(0.5), v / 2)
    two = make_saw(SawParams(2, 1.0, v))
    assert np.allclose(two.left_limit(0.5), v) and np.allclose(two.evaluate(0.5), 0)


def test_one_variation_examples():
    assert one_variation_decomposed([1.0, 0.0], [], 3.0) == 3.0
    assert one_variation_decomposed([0.0], [(0.2, [2.0]), (0.7, [3.0])], 1.0) == 5.0
    assert one_variation_decomposed([0.0, 1.0], [(0.5, [0.0, -1.0])], 1.0) == 2.0


def test_one_variation_matches_dp():
    path = CadlagPath.from_drift_and_jumps([0.0, 1.0], [0.5], [[0.0, -1.0]], 1.0)
    assert pvar_exact(path, 1.0).value == pytest.approx(2.0, rel=1e-12)


def test_polygonal_fixed_points():
    poly = CadlagPath.polygon([0.0, 0.5, 1.0], [[0.0], [2.0], [1.0]])
    assert np.allclose(polygonal_approx(poly, 2, 1.0).values, poly.values)
    lin = linear_path([1.0, -1.0], 2.0)
    assert np.allclose(polygonal_approx(lin, 1, 2.0).values, lin.values)


def test_polygonal_rejects_jumps():
    with pytest.raises(PathError):
        polygonal_approx(make_saw(SawParams(2, 1.0, [1.0])), 4, 1.0)


def circle(m=4096):
    t = np.linspace(0, 1, m + 1)
    return CadlagPath.polygon(t, np.column_stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]))


def test_circle_polygonal_convergence():
    phi = circle()
    vals = [pvar_exact(combine(phi, polygonal_approx(phi, n, 1.0), (1.0, -1.0)), 1.5).value
            for n in (4, 8, 16, 32, 64)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.05


def test_pvar_norm_examples():
    zero = CadlagPath.polygon([0.0, 10.0], [[0.0], [0.0]])
    assert pvar_norm(zero, 1.5, 10) == 0
    big = make_saw(SawParams(4, 1.0, [3.0]))
    big = CadlagPath(np.append(big.times, 10.0), np.vstack([big.values, [[0.0]]]),
                     np.append(big.kinds, 0))
    assert pvar_norm(big, 1.5, 10) == pytest.approx(1 - 2.0 ** -10, rel=1e-15)
    lin = linear_path([0.1], 3.0)
    assert pvar_norm(lin, 1.7, 3) == pytest.approx(0.1375, rel=1e-12)


def test_pvar_norm_domain():
    with pytest.raises(PathError):
        pvar_norm(linear_path([1.0], 2.0), 1.5, 3)


def test_step_bound_examples():
    assert step_bound([[1.0], [1.0], [1.0]], 2, 1.0, 1.5) == 0
    vals = [[0.0], [1.0], [0.0]]
    assert step_bound(vals, 2, 1.0, 2.0) == 2.0
    assert pvar_bruteforce(make_step(vals, 1.0), 2.0).value_p == pytest.approx(2.0, rel=1e-12)


def test_step_frozen_oracle():
    path = make_step(STEP6_VALUES, 1.0)
    assert pvar_exact(path, 2.0).value_p == pytest.approx(STEP6_P2_POW, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.floats(1.0, 2.5))
def test_step_bound_holds(vals, p):
    assert pvar_exact(make_step(vals, 1.0), p).value_p <= step_bound(vals, 5, 1.0, p) * (1 + 1e-12)


def test_regularity_linear():
    a, T, p = np.array([0.3, -0.4]), 2.0, 1.5
    assert regularity_modulus(linear_path(a, T), p, T) == pytest.approx(1.0 ** p, rel=1e-12)
    for k in (2, 4, 8):
        expect = (T * 0.5) ** p * k ** (1 - p)
        assert regularity_modulus(linear_path(a, T), p, T / k) == pytest.approx(expect, rel=1e-9)
    zero = CadlagPath.polygon([0.0, 1.0], [[0.0], [0.0]])
    assert regularity_modulus(zero, 1.5, 0.1) == 0


def test_regularity_rejects_jumps():
    with pytest.raises(PathError):
        regularity_modulus(make_saw(SawParams(1, 1.0, [1.0])), 1.5, 0.1)


def test_skorohod_identity_zero():
    rng = np.random.default_rng(0)
    f = CadlagPath.from_drift_and_jumps([0.3], np.sort(rng.uniform(0, 3, 4)), rng.normal(size=(4, 1)), 3.0)
    assert skorohod_upper(f, f, 1.5, 1) == 0


def test_skorohod_shift_only_log_term():
    g = CadlagPath.from_drift_and_jumps([0.0], [0.5], [[1.0]], 3.0)
    f = CadlagPath.from_drift_and_jumps([0.0], [0.6], [[1.0]], 3.0)
    lam = jump_aligned_time_change(f, g, 2.0)
    assert float(lam(0.5)) == 0.6
    assert skorohod_upper(f, g, 1.5, 1, lam) == pytest.approx(math.log(1.2), rel=1e-12)
    val, _ = skorohod_search(f, g, 1.5, 1)
    assert val <= skorohod_upper(f, g, 1.5, 1) and val <= math.log(1.2) + 1e-12


def test_dyadic_time_change_slopes():
    lam = dyadic_slope_time_change([(1.0, 1.3), (2.0, 2.1)])
    assert set(np.round(lam.slopes(), 12)) <= {0.5, 1.0, 2.0}
    assert float(lam(1.0)) == pytest.approx(1.3) and float(lam(2.0)) == pytest.approx(2.1)
    assert dyadic_slope_time_change([(1.0, 3.0)]) is None


def test_change_of_time_validation():
    with pytest.raises(ValueError):
        ChangeOfTime([0.0, 1.0, 0.5], [0.0, 1.0, 2.0])


def test_pvar_below_matches_value():
    path = make_saw(SawParams(5, 1.0, [0.2, 0.1]))
    v = pvar_exact(path, 1.5).value
    assert pvar_below(path, 1.5, v * 1.001)
    assert not pvar_below(path, 1.5, v * 0.999)


# -- properties ------------------------------------------------------------------

@st.composite
def node_paths(draw, max_nodes=9):
    n = draw(st.integers(1, max_nodes))
    d = draw(st.integers(1, 3))
    vals = draw(st.lists(st.floats(-10, 10), min_size=n * d, max_size=n * d))
    return CadlagPath.polygon(np.arange(float(n)), np.array(vals).reshape(n, d))


@settings(max_examples=150, deadline=None)
@given(node_paths(), st.sampled_from([1.0, 1.3, 1.7, 1.99, 2.5]))
def test_dp_matches_independent_oracle(path, p):
    assert pvar_exact(path, p).value_p == pytest.approx(pvar_pow_subsets(path.values, p),
                                                        rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("scale", [4.2e-290, 1e-160, 1e200])
@pytest.mark.parametrize("p", [1.0, 1.5])
def test_extreme_increments_do_not_underflow(scale, p):
    path = CadlagPath.polygon(np.arange(4.0), scale * np.array([[0.0], [1.0], [-0.5], [2.0]]))
    expect = pvar_pow_subsets(path.values, p)
    assert pvar_exact(path, p).value_p == pytest.approx(expect, rel=1e-12)
    assert pvar_bruteforce(path, p).value_p == pytest.approx(expect, rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(node_paths(), st.floats(1.0, 3.0))
def test_partition_certifies_value(path, p):
    out = pvar_exact(path, p)
    assert all(a < b for a, b in zip(out.partition, out.partition[1:]))
    assert partition_sum(path, out.partition, p) == pytest.approx(out.value_p, rel=1e-9, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(node_paths(), st.floats(1.0, 2.0), st.floats(0.0, 2.0))
def test_monotone_in_p_and_sup_bound(path, p, dq):
    vp = pvar_exact(path, p).value
    vq = pvar_exact(path, p + dq).value
    assert vq <= vp * (1 + 1e-12)
    sup = float(np.max(np.linalg.norm(path.values - path.values[0], axis=1)))
    assert sup <= vq * (1 + 1e-12) + 1e-12


@st.composite
def jump_paths(draw):
    m = draw(st.integers(0, 4))
    times = draw(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m, unique=True))
    sizes = draw(st.lists(st.floats(-3, 3), min_size=2 * m, max_size=2 * m))
    slope = draw(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
    return CadlagPath.from_drift_and_jumps(slope, times, np.array(sizes).reshape(m, 2), 1.0)


@settings(max_examples=100, deadline=None)
@given(jump_paths(), jump_paths(), st.floats(1.0, 2.5))
def test_triangle_inequality(a, b, p):
    c = combine(a, b)
    assert pvar_exact(c, p).value <= (pvar_exact(a, p).value + pvar_exact(b, p).value) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(jump_paths(), st.floats(1.0, 2.5))
def test_jump_lower_bound(path, p):
    _, z = jump_arrays(path)
    assert pvar_exact(path, p).value_p >= np.sum(np.linalg.norm(z, axis=1) ** p) * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(jump_paths(), st.floats(1.0, 2.5))
def test_refinement_does_not_change_value(path, p):
    # interior points of linear segments never raise the supremum
    assert pvar_exact(refine(path, 0.01), p).value == pytest.approx(pvar_exact(path, p).value,
                                                                     rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.floats(0.1, 10), st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.floats(1.0, 3.0))
def test_saw_property(n, T, v, p):
    if np.linalg.norm(v) < 1e-6:
        v = [1.0, 0.0]
    params = SawParams(n, T, v)
    assert pvar_exact(make_saw(params), p).value_p == pytest.approx(saw_pvar_p(params, p), rel=1e-9)
