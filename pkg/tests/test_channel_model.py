import math

import numpy as np
import pytest
from conftest import binary_words, small_specs
from hypothesis import given
from hypothesis import strategies as st

from delfsc import oracles
from delfsc.channel_model import (
    BlockedObservation,
    ChannelError,
    ChannelSpec,
    EmbeddingCountOverflow,
    concat_law,
    count_var_words,
    deletion_law,
    embedding_count,
    fsc_forward,
    fsc_state_law,
    hat_kernel,
    hat_kernel_table,
    identity_kernel,
    lattice_forward,
    random_channel_spec,
    sample_transmission,
    trie_forward,
    var_word_index,
    var_words,
    words,
)


# -- embedding counts ------------------------------------------------------------


@pytest.mark.parametrize(
    "x, y, expected",
    [((0, 0, 1), (0, 1), 2), ((0, 1, 0, 1), (0, 1), 3), ((1, 1, 1), (), 1), ((0, 1), (1, 0), 0)],
)
def test_embedding_count_small(x, y, expected):
    assert embedding_count(x, y) == expected


def test_embedding_count_repeated_symbol_is_binomial():
    assert embedding_count((0,) * 10, (0,) * 4) == math.comb(10, 4)


@given(binary_words(max_size=9), binary_words(max_size=5))
def test_embedding_count_matches_mask_enumeration(x, y):
    assert embedding_count(x, y) == oracles.embedding_count(x, y)


def test_embedding_count_overflow():
    # C(70, 35) > 2**64
    with pytest.raises(EmbeddingCountOverflow):
        embedding_count((0,) * 70, (0,) * 35)
    assert embedding_count((0,) * 66, (0,) * 33) == math.comb(66, 33)


@given(binary_words(max_size=7), st.floats(0, 1))
def test_deletion_law_sums_to_one(x, d):
    total = sum(deletion_law(x, w, d) for w in var_words(2, len(x)))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_deletion_law_rejects_long_output():
    with pytest.raises(ChannelError):
        deletion_law((0,), (0, 0), 0.1)


# -- word enumeration --------------------------------------------------------------


def test_var_words_order_and_index():
    ws = list(var_words(2, 3))
    assert ws[:4] == [(), (0,), (1,), (0, 0)]
    assert len(ws) == count_var_words(2, 3) == 15
    assert [var_word_index(w, 2) for w in ws] == list(range(15))
    assert count_var_words(1, 4) == 5


def test_words_fixed_length():
    w = words(3, 2)
    assert w.shape == (9, 2)
    assert tuple(w[5]) == (1, 2)
    assert words(2, 0).shape == (1, 0)


# -- spec validation ----------------------------------------------------------------


def test_spec_validation():
    k = identity_kernel(2)
    with pytest.raises(ChannelError, match="d="):
        ChannelSpec(1.5, k)
    with pytest.raises(ChannelError, match="s0"):
        ChannelSpec(0.1, k, 1)
    bad = k.copy()
    bad[0, 1, 1, 0] = 0.8
    with pytest.raises(ChannelError, match="s'=0, x=1"):
        ChannelSpec(0.1, bad)
    with pytest.raises(ChannelError, match="shape"):
        ChannelSpec(0.1, np.ones((2, 2, 2)))
    spec = ChannelSpec(0.1, k)
    assert not spec.kernel.flags.writeable
    assert spec.alphabets.s_size == 1


# -- FSC layer ------------------------------------------------------------------------


@given(small_specs(), st.integers(0, 5), st.integers(0, 2**20))
def test_fsc_forward_matches_state_enumeration(spec, n, seed):
    r = np.random.default_rng(seed)
    x = r.integers(0, 2, n)
    z = r.integers(0, 2, n)
    p, post = fsc_forward(x, z, spec.s0, spec.kernel)
    assert p == pytest.approx(oracles.fsc_prob(x, z, spec.s0, spec.kernel), abs=1e-14)
    if p > 0:
        assert post.sum() == pytest.approx(1.0)


def test_fsc_forward_length_mismatch(two_state):
    with pytest.raises(ChannelError):
        fsc_forward([0, 1], [0], 0, two_state.kernel)


@given(small_specs(), binary_words(max_size=4))
def test_fsc_state_law_matches_enumeration(spec, x):
    np.testing.assert_allclose(
        fsc_state_law(x, spec.s0, spec.kernel), oracles.fsc_state_law(x, spec.s0, spec.kernel), atol=1e-13
    )


# -- concatenated channel ---------------------------------------------------------


@given(small_specs(), binary_words(max_size=5))
def test_concat_law_normalized(spec, x):
    total = sum(concat_law(x, w, spec) for w in var_words(spec.z_size, len(x)))
    assert total == pytest.approx(1.0, abs=1e-12)


@given(small_specs(), binary_words(max_size=5), st.integers(0, 2**20))
def test_concat_law_matches_brute_force(spec, x, seed):
    r = np.random.default_rng(seed)
    zstar = tuple(r.integers(0, 2, int(r.integers(0, len(x) + 1))))
    assert concat_law(x, zstar, spec) == pytest.approx(oracles.concat_law(x, zstar, spec), abs=1e-13)


def test_concat_law_trivial_cases():
    spec = ChannelSpec(0.0, identity_kernel(2))
    assert concat_law((0, 1, 1), (0, 1, 1), spec) == 1.0
    assert concat_law((0, 1, 1), (0, 1), spec) == 0.0
    gone = spec.with_(d=1.0)
    assert concat_law((0, 1, 1), (), gone) == 1.0
    assert concat_law((0, 1), (0,), gone) == 0.0


def test_lattice_long_block_no_underflow(two_state):
    x = np.zeros(2000, dtype=np.int64)
    v, log_scale = lattice_forward(x, [], 0.5, two_state.kernel, np.array([1.0, 0.0]))
    assert log_scale == pytest.approx(-2000.0)
    z = np.zeros(1500, dtype=np.int64)
    v, log_scale = lattice_forward(x, z, 0.3, two_state.kernel, np.array([1.0, 0.0]))
    assert np.isfinite(log_scale) and v.max() == pytest.approx(1.0)


@given(small_specs(), binary_words(max_size=5))
def test_trie_matches_lattice(spec, x):
    init = np.eye(spec.s_size)
    table = trie_forward(x, spec.d, spec.kernel, init)
    for i, w in enumerate(var_words(spec.z_size, len(x))):
        for s in range(spec.s_size):
            masses, total = hat_kernel(x, w, s, spec)
            np.testing.assert_allclose(table[s, i], masses, atol=1e-14)


def test_hat_kernel_table_rows_stochastic(two_state):
    t = hat_kernel_table((0, 1, 1), two_state)
    np.testing.assert_allclose(t.sum(axis=(1, 2)), 1.0, atol=1e-12)


def test_hat_kernel_rejects_long_word(two_state):
    with pytest.raises(ChannelError):
        hat_kernel((0,), (0, 1), 0, two_state)


# -- sampling -----------------------------------------------------------------------


def test_sample_transmission_deterministic_and_blocked(two_state):
    x = np.random.default_rng(0).integers(0, 2, 60)
    a, sa = sample_transmission(x, two_state, 6, seed=3)
    b, sb = sample_transmission(x, two_state, 6, seed=3)
    assert sa == sb
    assert all(np.array_equal(u, v) for u, v in zip(a.blocks, b.blocks))
    assert a.k == 10 and np.all(a.deletion_counts >= 0)
    assert len(a.concatenated()) == 60 - a.deletion_counts.sum()


def test_sample_transmission_common_deletions(two_state):
    # deletion pattern depends on the seed only, not on the input
    x0 = np.zeros(40, dtype=np.int64)
    x1 = np.ones(40, dtype=np.int64)
    a, _ = sample_transmission(x0, two_state, 8, 11)
    b, _ = sample_transmission(x1, two_state, 8, 11)
    np.testing.assert_array_equal(a.deletion_counts, b.deletion_counts)


def test_sample_transmission_frequencies(two_state):
    # empirical block-output law matches concat_law
    x = (0, 1, 1)
    counts = {}
    reps = 4000
    for seed in range(reps):
        obs, _ = sample_transmission(x, two_state, 3, seed)
        key = tuple(obs.blocks[0])
        counts[key] = counts.get(key, 0) + 1
    for w in var_words(2, 3):
        p = concat_law(x, w, two_state)
        se = math.sqrt(p * (1 - p) / reps)
        assert abs(counts.get(w, 0) / reps - p) <= 5 * se + 1e-3


def test_sample_transmission_bad_length(two_state):
    with pytest.raises(ChannelError):
        sample_transmission([0, 1, 0], two_state, 2, 0)


def test_blocked_observation_validates():
    with pytest.raises(ChannelError):
        BlockedObservation(((0, 1, 0),), 2)


def test_random_channel_spec_reproducible():
    a = random_channel_spec(5, 2, 3, 2)
    b = random_channel_spec(5, 2, 3, 2)
    np.testing.assert_array_equal(a.kernel, b.kernel)
    assert a.d == b.d and 0.05 <= a.d <= 0.6
    assert a.kernel.shape == (2, 2, 3, 2)
