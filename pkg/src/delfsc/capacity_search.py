"""Search over order-m Markov inputs for the best estimated rate.

Every candidate is scored with the same chain seeds (common random numbers),
so rate differences between candidates are far less noisy than the rates
themselves.  The winner is re-estimated on held-out seeds before reporting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel_model import ChannelSpec
from .input_models import MarkovInputSpec, lift, uniform_markov
from .trellis_estimator import EstimatorError, RateEstimate, chain_densities, summarize

log = logging.getLogger(__name__)

HOLDOUT_OFFSET = 1_000_003
MIN_STEP = 1e-3


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizeResult:
    best: MarkovInputSpec
    estimate: RateEstimate  # held-out seeds
    selection_estimate: RateEstimate  # seeds used during the search
    evaluations: int


@dataclass
class SweepRow:
    m: int
    best: MarkovInputSpec
    estimate: RateEstimate
    evaluations: int
    flags: list = field(default_factory=list)


@dataclass
class SweepResult:
    rows: list
    spec_fingerprint: str
    config: dict


def _evaluate(q, m, spec, n, k, chains, seed):
    inp = MarkovInputSpec(m, q)
    try:
        return chain_densities(inp, spec, n, k, chains, seed)
    except EstimatorError as exc:
        log.debug("candidate rejected: %s", exc)
        return None


def _paired_se(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    if len(diff) < 2:
        return 0.0
    return float(diff.std(ddof=1) / math.sqrt(len(diff)))


def optimize_markov_rate(
    spec: ChannelSpec,
    m: int,
    budget: int,
    n: int,
    k: int,
    chains: int,
    seed: int,
    initial: list | None = None,
    n_random_starts: int | None = None,
) -> OptimizeResult:
    """Multi-start local search on the product of simplices (one per context).

    Starts are the uniform chain, any ``initial`` chains, and Dirichlet(1)
    draws.  The local phase moves one context row towards a vertex by
    ``step``; a move is accepted when the paired rate gain exceeds one
    standard error of the paired difference.  The step halves after a full
    pass without acceptance.  ``budget`` counts rate evaluations.
    """
    if budget < 1:
        raise SearchError("budget must be >= 1")
    xs = spec.x_size
    n_ctx = xs**m
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11, m]))
    starts = [uniform_markov(xs, m).q]
    for cand in initial or []:
        starts.append(np.asarray(cand.q if isinstance(cand, MarkovInputSpec) else cand, float))
    if n_random_starts is None:
        n_random_starts = min(3, budget // 6)
    for _ in range(n_random_starts):
        starts.append(rng.dirichlet(np.ones(xs), size=n_ctx))

    used = 0
    best_q, best_vals = None, None
    for q in starts:
        if used >= budget:
            break
        vals = _evaluate(q, m, spec, n, k, chains, seed)
        used += 1
        if vals is not None and (best_vals is None or vals.mean() > best_vals.mean()):
            best_q, best_vals = np.array(q), vals
    if best_q is None:
        raise SearchError(f"no finite rate estimate within budget {budget}")

    step = 0.25
    while used < budget and step >= MIN_STEP:
        accepted = False
        for c in range(n_ctx):
            for b in range(xs):
                if used >= budget:
                    break
                if best_q[c, b] >= 1.0 - 1e-12:
                    continue
                cand = best_q.copy()
                cand[c] = (1.0 - step) * cand[c]
                cand[c, b] += step
                cand[c] /= cand[c].sum()
                vals = _evaluate(cand, m, spec, n, k, chains, seed)
                used += 1
                if vals is None:
                    continue
                gain = vals.mean() - best_vals.mean()
                if gain > _paired_se(vals, best_vals) and gain > 0:
                    best_q, best_vals = cand, vals
                    accepted = True
                    log.debug("m=%d accepted step %.3g at context %d: %.6f", m, step, c, vals.mean())
        if not accepted:
            step *= 0.5

    best = MarkovInputSpec(m, best_q)
    selection = summarize(best_vals, best, n, k, seed)
    holdout_seed = seed + HOLDOUT_OFFSET
    fresh = summarize(chain_densities(best, spec, n, k, chains, holdout_seed), best, n, k, holdout_seed)
    return OptimizeResult(best, fresh, selection, used)


def order_sweep(
    spec: ChannelSpec,
    m_list,
    n: int,
    k: int,
    chains: int,
    seed: int,
    budget: int,
    fingerprint: str = "",
) -> SweepResult:
    """Optimize each order in ``m_list`` with shared seeds.

    Each order also starts from the previous order's winner written at the
    higher order, so an order never has to rediscover what a lower one found.
    A drop in lower bound beyond two combined standard errors is flagged.
    """
    m_list = [int(m) for m in m_list]
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise SearchError(f"m_list must be strictly increasing: {m_list}")
    rows: list[SweepRow] = []
    prev = None
    for m in m_list:
        initial = []
        if prev is not None:
            carried = prev.best
            while carried.m < m:
                carried = lift(carried)
            initial.append(carried)
        res = optimize_markov_rate(spec, m, budget, n, k, chains, seed, initial=initial)
        row = SweepRow(m, res.best, res.estimate, res.evaluations)
        if prev is not None:
            tol = 2.0 * math.hypot(prev.estimate.std_error, res.estimate.std_error)
            drop = prev.estimate.lower_bound - res.estimate.lower_bound
            if drop > tol:
                row.flags.append(f"decrease_vs_m{prev.m}:{drop:.3g}>{tol:.3g}")
        rows.append(row)
        prev = row
    config = {"m_list": m_list, "n": n, "k": k, "chains": chains, "seed": seed, "budget": budget}
    return SweepResult(rows, fingerprint, config)
