import math
from itertools import product

import numpy as np
import pytest
from conftest import small_specs
from hypothesis import given
from hypothesis import strategies as st

from delfsc import oracles
from delfsc.channel_model import ChannelSpec, identity_kernel, random_channel_spec, var_words
from delfsc.exact_info import (
    ConvergenceError,
    ExactLimitError,
    binary_entropy,
    blahut_arimoto,
    blocked_joint,
    channel_matrix,
    conditional_entropy,
    entropy,
    exact_cn,
    information_density,
    joint_law,
    merge_count_bound,
    merge_deficiency,
    mi_with_block_side_info,
    mutual_information,
    output_conditional_entropy,
    segmented_joint,
    side_info_penalty,
    split_count,
    uniform_pmf,
)


def _pmf(seed, size):
    return np.random.default_rng(seed).dirichlet(np.ones(size))


def test_erasure_joint(erasure):
    law = joint_law(uniform_pmf(2, 1), erasure, 1)
    # columns: (), (0,), (1,)
    np.testing.assert_allclose(law.table, [[0.2, 0.3, 0.0], [0.2, 0.0, 0.3]], atol=1e-15)
    assert mutual_information(law) == pytest.approx(0.6, abs=1e-12)


def test_all_deleted_gives_zero_information(two_state):
    law = joint_law(_pmf(0, 8), two_state.with_(d=1.0), 3)
    assert law.table[:, 1:].sum() == 0.0
    assert mutual_information(law) == pytest.approx(0.0, abs=1e-15)


def test_size_limit_names_bound(two_state):
    with pytest.raises(ExactLimitError, match="max_cells=100"):
        joint_law(uniform_pmf(2, 4), two_state, 4, max_cells=100)


@given(small_specs(), st.integers(1, 4), st.integers(0, 2**20))
def test_mi_identities(spec, n, seed):
    law = joint_law(_pmf(seed, 2**n), spec, n)
    np.testing.assert_allclose(law.table.sum(axis=1), law.input_pmf, atol=1e-10)
    i = mutual_information(law)
    hx, hz = entropy(law.input_pmf), entropy(law.output_pmf)
    assert i == pytest.approx(hx - conditional_entropy(law), abs=1e-10)
    assert i == pytest.approx(hz - output_conditional_entropy(law), abs=1e-10)
    assert i == pytest.approx(oracles.mutual_information(law.table), abs=1e-10)
    assert -1e-12 <= i <= min(hx, hz) + 1e-12


@given(st.integers(0, 2**20), st.integers(1, 4))
def test_deletion_free_matches_fsc_enumeration(seed, n):
    spec = random_channel_spec(seed, 2, 2, 2, d=0.0)
    pmf = _pmf(seed, 2**n)
    rows = {}
    for i, x in enumerate(product(range(2), repeat=n)):
        rows[i] = {z: pmf[i] * oracles.fsc_prob(x, z, spec.s0, spec.kernel) for z in product(range(2), repeat=n)}
    table, _ = oracles.joint_from_rows(rows)
    assert mutual_information(joint_law(pmf, spec, n)) == pytest.approx(
        oracles.mutual_information(table), abs=1e-9
    )


def test_product_law_zero_mi():
    table = np.outer([0.3, 0.7], [0.1, 0.5, 0.4])
    assert mutual_information(table) == pytest.approx(0.0, abs=1e-15)


def test_information_density(erasure):
    law = joint_law(uniform_pmf(2, 1), erasure, 1)
    assert information_density(law, 0, 0) == pytest.approx(0.0, abs=1e-15)
    assert information_density(law, 0, 1) == pytest.approx(1.0)
    expect = sum(
        law.table[x, z] * information_density(law, x, z)
        for x in range(2)
        for z in range(3)
        if law.table[x, z] > 0
    )
    assert expect == pytest.approx(mutual_information(law), abs=1e-12)
    with pytest.raises(ValueError):
        information_density(joint_law(np.array([1.0, 0.0]), erasure, 1), 1, 0)


@given(small_specs(), st.integers(1, 3), st.integers(0, 2**20))
def test_density_expectation_is_mi(spec, n, seed):
    law = joint_law(_pmf(seed, 2**n), spec, n)
    total = 0.0
    for x, z in zip(*np.nonzero(law.table)):
        total += law.table[x, z] * information_density(law, x, z)
    assert total == pytest.approx(mutual_information(law), abs=1e-10)


def test_joint_csv(erasure):
    text = joint_law(uniform_pmf(2, 1), erasure, 1).to_csv().splitlines()
    assert text[0] == "x_index,z_index,probability"
    assert text[1:] == ["0,0,0.2", "0,1,0.3", "1,0,0.2", "1,2,0.3"]


# -- side information --------------------------------------------------------------


@given(small_specs(), st.integers(2, 4), st.integers(0, 2**20), st.data())
def test_segmented_joint_matches_mask_enumeration(spec, n, seed, data):
    t1 = data.draw(st.integers(1, n - 1))
    bounds = [t1, n]
    pmf = _pmf(seed, 2**n)
    table = segmented_joint(pmf, bounds, spec)
    segs = [list(var_words(2, t1)), list(var_words(2, n - t1))]
    col = {(a, b): i * len(segs[1]) + j for i, a in enumerate(segs[0]) for j, b in enumerate(segs[1])}
    for xi, x in enumerate(product(range(2), repeat=n)):
        ref = np.zeros(table.shape[1])
        for key, p in oracles.segmented_law(x, bounds, spec).items():
            ref[col[key]] += pmf[xi] * p
        np.testing.assert_allclose(table[xi], ref, atol=1e-14)


@given(small_specs(), st.integers(1, 4), st.integers(0, 2**20), st.data())
def test_side_info_sandwich(spec, n, seed, data):
    cuts = sorted(data.draw(st.sets(st.integers(1, n - 1), max_size=n - 1))) if n > 1 else []
    bounds = [*cuts, n]
    pmf = _pmf(seed, 2**n)
    side = mi_with_block_side_info(pmf, bounds, spec)
    plain = mutual_information(joint_law(pmf, spec, n))
    assert -1e-12 <= side - plain <= side_info_penalty(bounds) + 1e-12


def test_side_info_trivial_cases(two_state):
    pmf = _pmf(3, 16)
    exact = two_state.with_(d=0.0)
    assert mi_with_block_side_info(pmf, [2, 4], exact) == pytest.approx(
        mutual_information(joint_law(pmf, exact, 4)), abs=1e-12
    )
    gone = two_state.with_(d=1.0)
    assert mi_with_block_side_info(pmf, [2, 4], gone) == pytest.approx(0.0, abs=1e-15)
    assert side_info_penalty([2, 4]) == pytest.approx(2 * math.log2(3))


def test_segmented_joint_bad_boundaries(two_state):
    with pytest.raises(ValueError):
        segmented_joint(uniform_pmf(2, 3), [2, 2, 3], two_state)


# -- merge map ------------------------------------------------------------------------


def _brute_split(v, k, n):
    pieces = list(var_words(2, n))
    return sum(1 for combo in product(pieces, repeat=k) if sum(combo, ()) == tuple(v))


def test_split_count_examples():
    assert split_count((1,), 2, 1) == 2
    assert split_count((0, 1, 1, 0), 2, 2) == 1
    assert split_count((0, 1, 1), 1, 3) == 1
    assert split_count((0,) * 5, 2, 2) == 0


@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_split_count_matches_enumeration(k, n, data):
    v = data.draw(st.lists(st.integers(0, 1), max_size=k * n))
    g = split_count(v, k, n)
    assert g == _brute_split(v, k, n)
    assert g <= math.comb(len(v) + k, k)


@given(st.integers(0, 2**20), st.integers(1, 2), st.integers(1, 3))
def test_merge_deficiency_bounds(seed, k, n):
    spec = random_channel_spec(seed, 2, 2, 2)
    table, cols = blocked_joint(_pmf(seed, 2 ** (k * n)), spec, n, k)
    res = merge_deficiency(table, cols, n)
    assert res.expected_abs_change <= res.max_log_split + 1e-9
    assert res.prob_change <= res.prob_not_injective + 1e-9


def test_merge_deficiency_single_block(two_state):
    table, cols = blocked_joint(_pmf(1, 8), two_state, 3, 1)
    res = merge_deficiency(table, cols, 3)
    assert res.expected_abs_change == pytest.approx(0.0, abs=1e-12)
    assert res.prob_change == 0.0 and res.max_log_split == 0.0 and res.prob_not_injective == 0.0


def test_merge_count_bound_region():
    for n in range(1, 13):
        for k in range(1, 13):
            lhs, rhs = merge_count_bound(n, k)
            assert lhs < rhs
    assert binary_entropy(0.5) == 1.0 and binary_entropy(0.0) == 0.0


# -- capacity ------------------------------------------------------------------------


def test_cn_erasure(erasure):
    value, pmf = exact_cn(erasure, 1, tol=1e-10)
    assert value == pytest.approx(0.6, abs=1e-9)
    np.testing.assert_allclose(pmf, [0.5, 0.5], atol=1e-6)


def test_cn_all_deleted(two_state):
    for n in (1, 2, 3):
        assert exact_cn(two_state.with_(d=1.0), n)[0] == pytest.approx(0.0, abs=1e-12)


def test_cn_deletion_free_grid_search():
    spec = random_channel_spec(7, 2, 2, 2, d=0.0)
    w = channel_matrix(spec, 1)
    best = max(
        mutual_information(np.array([p, 1 - p])[:, None] * w) for p in np.linspace(0, 1, 20001)
    )
    assert exact_cn(spec, 1)[0] == pytest.approx(best, abs=1e-4)
    assert exact_cn(spec, 1)[0] >= best - 1e-9


def test_cn_relabeling_invariant():
    spec = random_channel_spec(9, 2, 2, 2, d=0.2)
    swapped = ChannelSpec(spec.d, spec.kernel[:, ::-1], spec.s0)
    tol = 1e-9
    assert exact_cn(spec, 3, tol)[0] == pytest.approx(exact_cn(swapped, 3, tol)[0], abs=2 * tol)


def test_blahut_arimoto_monotone_and_bracketed():
    w = channel_matrix(random_channel_spec(3, 2, 2, 2, d=0.3), 3)
    lower, r, history = blahut_arimoto(w, tol=1e-10)
    assert np.all(np.diff(history) >= -1e-12)
    upper = max(
        sum(w[x, z] * math.log2(w[x, z] / (r @ w)[z]) for z in range(w.shape[1]) if w[x, z] > 0)
        for x in range(w.shape[0])
    )
    assert 0 <= upper - lower <= 1e-10


def test_blahut_arimoto_iteration_cap():
    w = channel_matrix(random_channel_spec(3, 2, 2, 2, d=0.3), 3)
    with pytest.raises(ConvergenceError) as info:
        blahut_arimoto(w, tol=1e-15, max_iter=3)
    assert info.value.bracket > 0


def test_identity_channel_capacity():
    spec = ChannelSpec(0.0, identity_kernel(2))
    assert exact_cn(spec, 3)[0] == pytest.approx(1.0, abs=1e-9)
