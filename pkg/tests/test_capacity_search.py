import math

import numpy as np
import pytest

from delfsc.capacity_search import (
    SearchError,
    optimize_markov_rate,
    order_sweep,
)
from delfsc.channel_model import ChannelSpec, identity_kernel, random_channel_spec
from delfsc.exact_info import exact_cn
from delfsc.input_models import MarkovInputSpec, lift
from delfsc.trellis_estimator import estimate_rate, side_info_penalty


def test_noiseless_optimum():
    spec = ChannelSpec(0.0, identity_kernel(2))
    res = optimize_markov_rate(spec, 0, budget=8, n=4, k=16, chains=4, seed=1)
    assert res.estimate.rate_side_info >= 0.99
    assert res.evaluations <= 8


@pytest.mark.parametrize("d", [0.2, 0.5])
def test_erasure_equivalent(d):
    spec = ChannelSpec(d, identity_kernel(2))
    res = optimize_markov_rate(spec, 0, budget=10, n=1, k=400, chains=8, seed=2)
    est = res.estimate
    assert abs(est.rate_side_info - (1 - d)) <= 3 * est.std_error + 1e-12


def test_beats_exact_cn_bound():
    spec = random_channel_spec(4, 2, 2, 2, d=0.15)
    n = 4
    cn, _ = exact_cn(spec, n)
    res = optimize_markov_rate(spec, 1, budget=12, n=n, k=64, chains=8, seed=3)
    est = res.estimate
    assert est.lower_bound <= math.log2(2)
    assert est.rate_side_info >= cn - side_info_penalty(n) - 3 * est.std_error


def test_holdout_close_to_selection(two_state):
    res = optimize_markov_rate(two_state, 1, budget=10, n=4, k=32, chains=8, seed=5)
    a, b = res.selection_estimate, res.estimate
    assert a.seed != b.seed
    assert abs(a.rate_side_info - b.rate_side_info) <= 3 * math.hypot(a.std_error, b.std_error)


def test_budget_guard(two_state):
    with pytest.raises(SearchError):
        optimize_markov_rate(two_state, 0, budget=0, n=2, k=2, chains=2, seed=1)


def test_deterministic(two_state):
    a = optimize_markov_rate(two_state, 1, budget=6, n=3, k=8, chains=3, seed=9)
    b = optimize_markov_rate(two_state, 1, budget=6, n=3, k=8, chains=3, seed=9)
    np.testing.assert_array_equal(a.best.q, b.best.q)
    assert a.estimate == b.estimate


def test_initial_candidate_is_used(two_state):
    good = MarkovInputSpec(0, [[0.3, 0.7]])
    res = optimize_markov_rate(two_state, 0, budget=2, n=3, k=8, chains=3, seed=9, initial=[good])
    assert res.evaluations == 2


def test_single_order_sweep_matches_optimizer(two_state):
    sweep = order_sweep(two_state, [0], n=3, k=8, chains=3, seed=4, budget=5, fingerprint="abc")
    direct = optimize_markov_rate(two_state, 0, 5, 3, 8, 3, 4)
    assert len(sweep.rows) == 1
    assert sweep.rows[0].estimate == direct.estimate
    assert sweep.spec_fingerprint == "abc"
    assert sweep.config["m_list"] == [0]


def test_noiseless_sweep_no_flags():
    spec = ChannelSpec(0.0, identity_kernel(2))
    sweep = order_sweep(spec, [0, 1], n=4, k=16, chains=4, seed=1, budget=6)
    for row in sweep.rows:
        assert row.estimate.rate_side_info == pytest.approx(1.0, abs=0.01)
        assert row.flags == []
    assert [r.m for r in sweep.rows] == [0, 1]


def test_sweep_requires_increasing_orders(two_state):
    with pytest.raises(SearchError):
        order_sweep(two_state, [1, 1], 2, 2, 2, 0, 2)


def test_embedding_property(two_state):
    res = optimize_markov_rate(two_state, 1, budget=6, n=4, k=16, chains=4, seed=8)
    a = estimate_rate(res.best, two_state, 4, 16, 4, seed=8)
    b = estimate_rate(lift(res.best), two_state, 4, 16, 4, seed=8)
    assert abs(a.rate_side_info - b.rate_side_info) <= 1e-9
