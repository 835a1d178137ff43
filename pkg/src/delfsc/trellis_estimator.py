"""Monte Carlo information rates over the side-information (per-block) channel.

For a stationary Markov input cut into blocks of ``n`` symbols, the receiver
sees each block's output separately.  Along a sampled path

    rate ~= (log2 p(obs | path) - log2 p(obs)) / (k n)

where both terms are exact forward recursions: over FSC states for the
conditional, over (input context, FSC state) for the marginal.  Subtracting
``log2(n+1)/n`` turns the side-information rate into a lower bound on the
plain information rate.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .channel_model import (
    BlockedObservation,
    ChannelSpec,
    lattice_forward,
    sample_transmission,
    var_words,
    words,
)
from .input_models import MarkovInputSpec, block_pmf, sample_path

MAX_TRELLIS_STATES = 1 << 14
MAX_EXHAUSTIVE_CELLS = 20_000_000


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class RateEstimate:
    rate_side_info: float
    penalty: float
    lower_bound: float
    std_error: float
    m: int
    n: int
    k: int
    chains: int
    seed: int

    def to_json(self) -> dict:
        return asdict(self)


def side_info_penalty(n: int) -> float:
    """Per-symbol cost of revealing each block's deletion count."""
    return math.log2(n + 1) / n


def conditional_logprob(xi, obs: BlockedObservation, spec: ChannelSpec) -> float:
    """``log2 p(obs | xi, s0)``; ``-inf`` for an impossible observation."""
    xi = np.asarray(xi, dtype=np.int64)
    n = obs.n
    if len(xi) != obs.k * n:
        raise EstimatorError(f"path length {len(xi)} != k*n = {obs.k * n}")
    v = np.zeros(spec.s_size)
    v[spec.s0] = 1.0
    total = 0.0
    for i, block in enumerate(obs.blocks):
        v, log_scale = lattice_forward(xi[i * n : (i + 1) * n], block, spec.d, spec.kernel, v)
        mass = v.sum()
        if mass == 0.0 or not math.isfinite(log_scale):
            return -math.inf
        v = v / mass
        total += log_scale + math.log2(mass)
    return total


def _marginal_block(
    alpha: np.ndarray,
    z: np.ndarray,
    n: int,
    inp: MarkovInputSpec,
    spec: ChannelSpec,
) -> tuple[np.ndarray, float]:
    """Advance the (context, state) forward vector over one block emitting ``z``.

    Returns the new vector scaled to max 1 and its log2 scale.
    """
    xs, n_ctx, s_size = inp.x_size, inp.n_contexts, spec.s_size
    ell = len(z)
    d, keep = spec.d, 1.0 - spec.d
    if ell > n:
        return np.zeros_like(alpha), -math.inf
    trans = spec.kernel[:, :, z, :].transpose(1, 2, 0, 3)  # [x, t, s, s']
    tail = n_ctx // xs if inp.m else 1  # contexts that share the newest m-1 symbols
    lat = np.zeros((ell + 1, n_ctx, s_size))
    lat[0] = alpha
    log_scale = 0.0
    for j in range(n):
        lo = max(0, ell - (n - j))
        hi = min(j, ell)
        new = np.zeros_like(lat)
        # context c = (oldest, rest); after emitting x it becomes (rest, x)
        view = new.reshape(ell + 1, tail, xs if inp.m else 1, s_size)
        for x in range(xs):
            weighted = lat[lo : hi + 1] * inp.q[:, x][None, :, None]
            if inp.m:
                weighted = weighted.reshape(-1, xs, tail, s_size).sum(axis=1)
                dest = (slice(None), x)
            else:
                dest = (slice(None), 0)
            if d > 0.0:
                view[(slice(lo, hi + 1), *dest)] += d * weighted
            top = min(hi, ell - 1)
            if keep > 0.0 and top >= lo:
                sent = np.einsum(
                    "trs,tsu->tru", weighted[: top - lo + 1], trans[x, lo : top + 1]
                )
                view[(slice(lo + 1, top + 2), *dest)] += keep * sent
        peak = new.max()
        if peak == 0.0:
            return np.zeros_like(alpha), -math.inf
        lat = new / peak
        log_scale += math.log2(peak)
    return lat[ell], log_scale


def marginal_logprob(obs: BlockedObservation, inp: MarkovInputSpec, spec: ChannelSpec) -> float:
    """``log2 p(obs)`` under the stationary input ``inp`` starting from ``s0``."""
    if inp.n_contexts * spec.s_size > MAX_TRELLIS_STATES:
        raise EstimatorError(
            f"trellis has {inp.n_contexts * spec.s_size} states > {MAX_TRELLIS_STATES}"
        )
    alpha = np.zeros((inp.n_contexts, spec.s_size))
    alpha[:, spec.s0] = inp.stationary
    total = 0.0
    for block in obs.blocks:
        alpha, log_scale = _marginal_block(alpha, block, obs.n, inp, spec)
        mass = alpha.sum()
        if mass == 0.0 or not math.isfinite(log_scale):
            return -math.inf
        alpha = alpha / mass
        total += log_scale + math.log2(mass)
    return total


def chain_density(inp: MarkovInputSpec, spec: ChannelSpec, n: int, k: int, seed: int) -> float:
    """Per-symbol information density of one sampled (path, observation) pair."""
    path = sample_path(inp, k * n, seed)
    obs, _ = sample_transmission(path, spec, n, seed)
    cond = conditional_logprob(path, obs, spec)
    marg = marginal_logprob(obs, inp, spec)
    if not (math.isfinite(cond) and math.isfinite(marg)):
        raise EstimatorError(
            f"sampled observation has zero probability (seed {seed}): "
            f"conditional={cond}, marginal={marg}"
        )
    return (cond - marg) / (k * n)


def chain_densities(
    inp: MarkovInputSpec, spec: ChannelSpec, n: int, k: int, chains: int, seed: int
) -> np.ndarray:
    """Chain ``i`` uses seed ``seed + i``; results ordered by chain index."""
    return np.array([chain_density(inp, spec, n, k, seed + i) for i in range(chains)])


def summarize(
    values: np.ndarray, inp: MarkovInputSpec, n: int, k: int, seed: int
) -> RateEstimate:
    values = np.asarray(values, dtype=float)
    chains = len(values)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(chains)) if chains > 1 else 0.0
    pen = side_info_penalty(n)
    return RateEstimate(mean, pen, mean - pen, se, inp.m, n, k, chains, seed)


def estimate_rate(
    inp: MarkovInputSpec, spec: ChannelSpec, n: int, k: int, chains: int, seed: int
) -> RateEstimate:
    if min(n, k, chains) < 1:
        raise EstimatorError("n, k and chains must be positive")
    if inp.x_size != spec.x_size:
        raise EstimatorError(
            f"input alphabet {inp.x_size} does not match channel input alphabet {spec.x_size}"
        )
    return summarize(chain_densities(inp, spec, n, k, chains, seed), inp, n, k, seed)


def timed_estimate(inp, spec, n, k, chains, seed) -> tuple[RateEstimate, float]:
    start = time.perf_counter()
    est = estimate_rate(inp, spec, n, k, chains, seed)
    return est, time.perf_counter() - start


# -- exhaustive expectation (micro scale) ---------------------------------------------


def _block_words(size: int, n: int) -> list[np.ndarray]:
    return [np.array(w, dtype=np.int64) for w in var_words(size, n)]


def conditional_block_matrices(spec: ChannelSpec, n: int) -> np.ndarray:
    """``T[zeta, w, s, s']`` from the conditional recursion on basis vectors."""
    blocks = words(spec.x_size, n)
    outs = _block_words(spec.z_size, n)
    eye = np.eye(spec.s_size)
    table = np.zeros((len(blocks), len(outs), spec.s_size, spec.s_size))
    for a, zeta in enumerate(blocks):
        for b, w in enumerate(outs):
            for s in range(spec.s_size):
                v, log_scale = lattice_forward(zeta, w, spec.d, spec.kernel, eye[s])
                if math.isfinite(log_scale):
                    table[a, b, s] = v * 2.0**log_scale
    return table


def marginal_block_matrices(inp: MarkovInputSpec, spec: ChannelSpec, n: int) -> np.ndarray:
    """``M[w, (c, s), (c', s')]`` from the marginal recursion on basis vectors."""
    outs = _block_words(spec.z_size, n)
    size = inp.n_contexts * spec.s_size
    table = np.zeros((len(outs), size, size))
    for b, w in enumerate(outs):
        for idx in range(size):
            alpha = np.zeros(size)
            alpha[idx] = 1.0
            out, log_scale = _marginal_block(
                alpha.reshape(inp.n_contexts, spec.s_size), w, n, inp, spec
            )
            if math.isfinite(log_scale):
                table[b, idx] = out.reshape(-1) * 2.0**log_scale
    return table


def exhaustive_rate(inp: MarkovInputSpec, spec: ChannelSpec, n: int, k: int) -> float:
    """Exact expectation of the per-symbol density the sampler averages.

    Enumerates every input path of ``k*n`` symbols and every per-block
    observation, weighting the same block recursions the sampler uses.
    """
    n_out = sum(spec.z_size**ell for ell in range(n + 1))
    cells = spec.x_size ** (k * n) * n_out**k * spec.s_size
    if cells > MAX_EXHAUSTIVE_CELLS:
        raise EstimatorError(
            f"exhaustive enumeration needs {cells} cells (> {MAX_EXHAUSTIVE_CELLS}); sample instead"
        )
    p_path = block_pmf(inp, k * n)
    cond = conditional_block_matrices(spec, n)  # [zeta, w, s, s']
    marg = marginal_block_matrices(inp, spec, n)  # [w, i, j]
    n_blocks, n_words = cond.shape[0], cond.shape[1]

    # p(obs | path) for all paths (rows) and observations (cols)
    v = np.zeros((1, 1, spec.s_size))
    v[0, 0, spec.s0] = 1.0
    for _ in range(k):
        v = np.einsum("pos,awst->paowt", v, cond)
        v = v.reshape(v.shape[0] * n_blocks, v.shape[2] * n_words, spec.s_size)
    p_cond = v.sum(axis=2)

    alpha = np.zeros((1, inp.n_contexts, spec.s_size))
    alpha[0, :, spec.s0] = inp.stationary
    alpha = alpha.reshape(1, -1)
    for _ in range(k):
        alpha = np.einsum("oi,wij->owj", alpha, marg).reshape(-1, marg.shape[1])
    p_obs = alpha.sum(axis=1)

    mask = p_cond > 0
    log_ratio = np.zeros_like(p_cond)
    log_ratio[mask] = np.log2(p_cond[mask] / np.broadcast_to(p_obs, p_cond.shape)[mask])
    return float((p_path[:, None] * p_cond * log_ratio).sum() / (k * n))


def exhaustive_estimate(inp: MarkovInputSpec, spec: ChannelSpec, n: int, k: int) -> RateEstimate:
    rate = exhaustive_rate(inp, spec, n, k)
    pen = side_info_penalty(n)
    return RateEstimate(rate, pen, rate - pen, 0.0, inp.m, n, k, 0, 0)
