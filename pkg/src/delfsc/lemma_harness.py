"""Exact small-instance checks of the inequalities the rate machinery relies on.

Each check rebuilds both sides of its inequality from definitions: entropies
come from :mod:`delfsc.oracles`, state laws from products of per-symbol
transition matrices, and split counts from enumerating block tuples.  The only
shared code with the modules under test is the channel law itself.

Check ids
---------
L1   state-law forgetting of the concatenated channel (trend over input length)
L2   |I(X;Y|Z,S) - I(X;Y|Z)| <= log2 |S| on random joints
L3   side information about per-segment deletion counts costs at most
     sum log2(t_i - t_{i-1} + 1) bits
L5   merging block outputs by concatenation (information density distortion)
P1   two initial states, same block input law
P2   stationary input, first block versus a shifted block
C3   |I(s0) - I(s0')| / n trend for a stationary input
T5   |C_n(s0) - C_n(s0')| trend
E26  log2 C(nk+k, k) <= (n+1) k h2(1/(n+1))
H    state-law forgetting of the per-block (hat) channel
"""
from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from . import oracles
from .channel_model import ChannelSpec, hat_kernel_table, random_channel_spec, var_words, words
from .exact_info import blocked_joint, channel_matrix, exact_cn
from .input_models import MarkovInputSpec, block_pmf
from .io import builtin_spec

PASS_TOL = 1e-9
MAX_ENUM_LENGTH = 16

CHECK_IDS = ("L1", "L2", "L3", "L5", "P1", "P2", "C3", "T5", "E26", "H")


class HarnessError(ValueError):
    pass


@dataclass
class CheckReport:
    check_id: str
    instance: dict
    lhs: list
    rhs: list
    margin: float
    passed: bool = field(init=False)
    runtime_s: float = 0.0

    def __post_init__(self):
        self.margin = float(self.margin)
        self.passed = bool(self.margin >= -PASS_TOL)

    def to_json(self, timing: bool = False) -> dict:
        out = asdict(self)
        if not timing:
            out["runtime_s"] = None
        return out


# -- shared exact pieces -----------------------------------------------------------


def _h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def symbol_state_matrices(spec: ChannelSpec) -> np.ndarray:
    """``A[x, s', s]``: state step for one input symbol, deletion included.

    A deleted symbol never reaches the FSC, so the state stays put.
    """
    marg = spec.kernel.sum(axis=2)  # [s', x, s]
    eye = np.eye(spec.s_size)
    return spec.d * eye[None] + (1.0 - spec.d) * marg.transpose(1, 0, 2)


def _all_products(mats: np.ndarray, length: int) -> np.ndarray:
    """Products ``A[x_1] ... A[x_length]`` for every input word, in lexicographic order."""
    out = np.eye(mats.shape[1])[None]
    for _ in range(length):
        out = np.einsum("wab,xbc->wxac", out, mats).reshape(-1, *mats.shape[1:])
    return out


def worst_case_state_tv(mats: np.ndarray, length: int) -> float:
    """max over inputs and initial-state pairs of TV(final-state laws)."""
    prods = _all_products(mats, length)
    s = prods.shape[1]
    worst = 0.0
    for a in range(s):
        for b in range(a + 1, s):
            worst = max(worst, float(0.5 * np.abs(prods[:, a] - prods[:, b]).sum(axis=1).max()))
    return worst


def forgetting_length(spec: ChannelSpec, eps: float, max_len: int = MAX_ENUM_LENGTH) -> int | None:
    """Smallest input length after which final-state laws differ by at most ``eps``.

    The worst-case TV cannot increase with length (each extra step is a
    stochastic matrix), so the first length that achieves ``eps`` serves every
    longer one.  ``None`` if not reached by ``max_len``.
    """
    mats = symbol_state_matrices(spec)
    for length in range(1, max_len + 1):
        if worst_case_state_tv(mats, length) <= eps:
            return length
    return None


def _trend_report(check_id, instance, grid, values, eps=None) -> CheckReport:
    diffs = [a - b for a, b in zip(values, values[1:])]
    margin = min(diffs) if diffs else 0.0
    rhs = list(values[:-1])
    if eps is not None:
        margin = min(margin, eps - values[-1])
        rhs.append(eps)
    inst = dict(instance, grid=list(grid))
    if eps is not None:
        inst["eps"] = eps
        hits = [g for g, v in zip(grid, values) if v <= eps]
        inst["empirical_K"] = hits[0] if hits else None
    return CheckReport(check_id, inst, list(values), rhs, margin)


def _mi_table(table: np.ndarray) -> float:
    return oracles.mutual_information(np.asarray(table, float))


def _random_pmf(rng, size: int) -> np.ndarray:
    return rng.dirichlet(np.ones(size))


def _random_specs(rng, count, s_max=3):
    return [
        random_channel_spec(int(rng.integers(2**31)), 2, 2, int(rng.integers(1, s_max + 1)))
        for _ in range(count)
    ]


# -- individual checks ---------------------------------------------------------------


def check_l1(config, seed):
    spec = builtin_spec(config.get("spec", "two_state_d010"))
    grid = config.get("grid", [2, 4, 6, 8])
    eps = config.get("eps", 0.05)
    if max(grid) > MAX_ENUM_LENGTH:
        raise HarnessError(f"L1 grid exceeds input length {MAX_ENUM_LENGTH}")
    mats = symbol_state_matrices(spec)
    values = [worst_case_state_tv(mats, k) for k in grid]
    return [_trend_report("L1", {"spec": config.get("spec", "two_state_d010")}, grid, values, eps)]


def check_h(config, seed):
    """Per-block state step from the hat kernel summed over block outputs."""
    name = config.get("spec", "two_state_d010")
    spec = builtin_spec(name)
    n = config.get("n", 2)
    grid = config.get("grid", [2, 4, 6, 8])
    eps = config.get("eps", 0.05)
    if max(grid) * n > MAX_ENUM_LENGTH:
        raise HarnessError(f"H grid * n exceeds input length {MAX_ENUM_LENGTH}")
    blocks = words(spec.x_size, n)
    mats = np.array([hat_kernel_table(z, spec).sum(axis=1) for z in blocks])
    values = [worst_case_state_tv(mats, k) for k in grid]
    return [_trend_report("H", {"spec": name, "n": n}, grid, values, eps)]


def check_l2(config, seed):
    rng = np.random.default_rng(seed)
    count = config.get("count", 100)
    reports = []
    for i in range(count):
        s = int(rng.choice([2, 3, 4]))
        dims = tuple(int(v) for v in rng.integers(2, 4, size=3)) + (s,)
        joint = rng.dirichlet(np.full(int(np.prod(dims)), 0.5)).reshape(dims)
        with_s = oracles.conditional_mi(joint, (0,), (1,), (2, 3))
        without = oracles.conditional_mi(joint, (0,), (1,), (2,))
        gap = abs(with_s - without)
        bound = math.log2(s)
        reports.append(CheckReport("L2", {"index": i, "dims": list(dims)}, [gap], [bound], bound - gap))
    return reports


def _segmented_mi_pair(x_pmf, boundaries, spec):
    """(I with per-segment outputs, I with the merged output), by mask enumeration."""
    n = boundaries[-1]
    seg_rows, plain_rows = {}, {}
    for i, x in enumerate(product(range(spec.x_size), repeat=n)):
        if x_pmf[i] == 0.0:
            continue
        law = oracles.segmented_law(x, boundaries, spec)
        seg_rows[i] = {key: x_pmf[i] * p for key, p in law.items()}
        merged = defaultdict(float)
        for key, p in law.items():
            merged[tuple(sym for seg in key for sym in seg)] += x_pmf[i] * p
        plain_rows[i] = merged
    seg, _ = oracles.joint_from_rows(seg_rows)
    plain, _ = oracles.joint_from_rows(plain_rows)
    return _mi_table(seg), _mi_table(plain)


def check_l3(config, seed):
    rng = np.random.default_rng(seed)
    n = config.get("n", 4)
    boundary_sets = config.get("boundaries")
    if boundary_sets is None:
        boundary_sets = [[2, n]] if n > 2 else [[n]]
    elif boundary_sets == "two_segment":
        boundary_sets = [[t, n] for t in range(1, n)]
    if n > 8:
        raise HarnessError("L3 enumerates 4^n cases; n must be <= 8")
    specs = _random_specs(rng, config.get("specs", 5))
    pmfs_per = config.get("pmfs", 1)
    reports = []
    for si, spec in enumerate(specs):
        for pi in range(pmfs_per):
            pmf = _random_pmf(rng, spec.x_size**n)
            for bounds in boundary_sets:
                side, plain = _segmented_mi_pair(pmf, list(bounds), spec)
                gap = side - plain
                bound = sum(math.log2(b - a + 1) for a, b in zip([0, *bounds], bounds))
                reports.append(
                    CheckReport(
                        "L3",
                        {"n": n, "boundaries": list(bounds), "spec": si, "pmf": pi, "s_size": spec.s_size},
                        [gap, gap],
                        [0.0, bound],
                        min(gap, bound - gap),
                    )
                )
    return reports


def _split_counts(z_size, n, k):
    """``{v: g(v)}`` by enumerating every k-tuple of block outputs."""
    blocks = list(var_words(z_size, n))
    counts = defaultdict(int)
    for combo in product(blocks, repeat=k):
        counts[tuple(sym for b in combo for sym in b)] += 1
    return counts, blocks


def _densities(table):
    px = table.sum(axis=1, keepdims=True)
    py = table.sum(axis=0, keepdims=True)
    out = np.zeros_like(table)
    mask = table > 0
    out[mask] = np.log2(table[mask] / (px * py)[mask])
    return out


def check_l5(config, seed):
    rng = np.random.default_rng(seed)
    grid = config.get("grid", [(k, n) for k in (1, 2, 3) for n in (1, 2, 3)])
    specs = _random_specs(rng, config.get("specs", 5))
    reports = []
    for si, spec in enumerate(specs):
        for k, n in grid:
            if k * n > 9:
                raise HarnessError("L5 instances need k*n <= 9")
            pmf = _random_pmf(rng, spec.x_size ** (k * n))
            table, cols = blocked_joint(pmf, spec, n, k)  # channel law only
            counts, _ = _split_counts(spec.z_size, n, k)
            merged_of = [tuple(sym for b in c for sym in b) for c in cols]
            keys = sorted(set(merged_of))
            idx = {v: i for i, v in enumerate(keys)}
            to_merged = np.array([idx[v] for v in merged_of])
            merged = np.zeros((table.shape[0], len(keys)))
            for j, col in enumerate(to_merged):
                merged[:, col] += table[:, j]
            iota = _densities(table)
            iota_m = _densities(merged)[:, to_merged]
            mask = table > 0
            diff = np.abs(iota - iota_m)[mask]
            exp_change = float((table[mask] * diff).sum())
            prob_change = float(table[mask][diff > PASS_TOL].sum())
            max_log_g = max(math.log2(g) for g in counts.values())
            p_y = table.sum(axis=0)
            prob_g = float(sum(p for p, v in zip(p_y, merged_of) if counts[v] != 1))
            reports.append(
                CheckReport(
                    "L5",
                    {"k": k, "n": n, "spec": si},
                    [exp_change, prob_change],
                    [max_log_g, prob_g],
                    min(max_log_g - exp_change, prob_g - prob_change),
                )
            )
    return reports


def _state_pairs(s_size):
    return [(a, b) for a in range(s_size) for b in range(a + 1, s_size)]


def check_p1(config, seed):
    """Block input law shared by both initial states; K(eps) from exact state laws."""
    rng = np.random.default_rng(seed)
    name = config.get("spec", "two_state_d010")
    spec = builtin_spec(name)
    eps = config.get("eps", 0.1)
    ns = config.get("n_grid", [4, 5, 6])
    k_eps = forgetting_length(spec, eps)
    if k_eps is None:
        raise HarnessError(f"no K(eps) within {MAX_ENUM_LENGTH} symbols for eps={eps}")
    lx = math.log2(spec.x_size)
    lsz = math.log2(spec.s_size)
    reports = []
    for n in ns:
        pmf = _random_pmf(rng, spec.x_size**n)
        mis = {}
        for s in range(spec.s_size):
            mis[s] = _mi_table(pmf[:, None] * channel_matrix(spec.with_(s0=s), n))
        for a, b in _state_pairs(spec.s_size):
            lhs = abs(mis[a] - mis[b]) / n
            for k in range(k_eps, n + 1):
                rhs = (2 * (lsz + math.log2(k + 1) + k * lx) + (n - k) * eps * lx) / n
                reports.append(
                    CheckReport(
                        "P1",
                        {"spec": name, "n": n, "k": k, "eps": eps, "K_eps": k_eps, "s0": a, "s0_alt": b},
                        [lhs],
                        [rhs],
                        rhs - lhs,
                    )
                )
    return reports


def shifted_block_joint(inp: MarkovInputSpec, spec: ChannelSpec, shift: int, n: int) -> np.ndarray:
    """Joint of ``X_{shift+1}^{shift+n}`` and its output, channel state left random.

    The state entering the block is whatever the first ``shift`` symbols left
    behind from ``s0``; it is correlated with the block through the input.
    """
    mats = symbol_state_matrices(spec)
    full = block_pmf(inp, shift + n)
    prefixes = _all_products(mats, shift)[:, spec.s0]  # [prefix, s]
    n_prefix = spec.x_size**shift
    table = None
    for bi, block in enumerate(words(spec.x_size, n)):
        # p(prefix, block) * state law after the prefix, summed over prefixes
        weights = full.reshape(n_prefix, -1)[:, bi]
        init = weights @ prefixes
        row = hat_kernel_table(block, spec)  # [s, w, s']
        out = np.einsum("s,swt->w", init, row)
        if table is None:
            table = np.zeros((spec.x_size**n, out.size))
        table[bi] = out
    return table


def check_p2(config, seed):
    rng = np.random.default_rng(seed)
    name = config.get("spec", "two_state_d010")
    spec = builtin_spec(name)
    eps = config.get("eps", 0.1)
    ns = config.get("n_grid", [4, 5, 6])
    shifts = config.get("shifts", [1, 2, 3])
    k_eps = forgetting_length(spec, eps)
    if k_eps is None:
        raise HarnessError(f"no K(eps) within {MAX_ENUM_LENGTH} symbols for eps={eps}")
    m = config.get("m", 1)
    q = rng.dirichlet(np.ones(spec.x_size), size=spec.x_size**m)
    inp = MarkovInputSpec(m, q)
    lx, lz, s = math.log2(spec.x_size), math.log2(spec.z_size), spec.s_size
    reports = []
    for n in ns:
        first = _mi_table(block_pmf(inp, n)[:, None] * channel_matrix(spec, n))
        for shift in shifts:
            if shift + n > MAX_ENUM_LENGTH:
                raise HarnessError("P2 instance too long for exact enumeration")
            later = _mi_table(shifted_block_joint(inp, spec, shift, n))
            lhs = abs(first - later) / n
            for t in range(k_eps, n + 1):
                rhs = eps * s * (lx + 2 * lz) + 2 * (
                    t * (lx + lz) + math.log2(t + 1) - 2 * eps * s * math.log2(s * eps)
                ) / n
                reports.append(
                    CheckReport(
                        "P2",
                        {"spec": name, "n": n, "shift": shift, "t": t, "eps": eps, "K_eps": k_eps, "m": m},
                        [lhs],
                        [rhs],
                        rhs - lhs,
                    )
                )
    return reports


def check_c3(config, seed):
    rng = np.random.default_rng(seed)
    name = config.get("spec", "two_state_d010")
    spec = builtin_spec(name)
    grid = config.get("grid", [1, 2, 3, 4, 5, 6])
    m = config.get("m", 1)
    inp = MarkovInputSpec(m, rng.dirichlet(np.ones(spec.x_size), size=spec.x_size**m))
    reports = []
    for a, b in _state_pairs(spec.s_size):
        values = []
        for n in grid:
            p = block_pmf(inp, n)
            ia = _mi_table(p[:, None] * channel_matrix(spec.with_(s0=a), n))
            ib = _mi_table(p[:, None] * channel_matrix(spec.with_(s0=b), n))
            values.append(abs(ia - ib) / n)
        reports.append(_trend_report("C3", {"spec": name, "m": m, "s0": a, "s0_alt": b}, grid, values))
    return reports


def check_t5(config, seed):
    name = config.get("spec", "two_state_d010")
    spec = builtin_spec(name)
    grid = config.get("grid", [1, 2, 3, 4, 5])
    tol = config.get("tol", 1e-9)
    reports = []
    for a, b in _state_pairs(spec.s_size):
        values = [
            abs(exact_cn(spec.with_(s0=a), n, tol)[0] - exact_cn(spec.with_(s0=b), n, tol)[0])
            for n in grid
        ]
        # each capacity is only known to within tol, so allow 2*tol of wiggle
        rep = _trend_report("T5", {"spec": name, "s0": a, "s0_alt": b, "tol": tol}, grid, values)
        rep.margin += 2 * tol
        rep.passed = rep.margin >= -PASS_TOL
        reports.append(rep)
    return reports


def check_e26(config, seed):
    n_max = config.get("n_max", 12)
    k_max = config.get("k_max", 12)
    reports = []
    for n in range(1, n_max + 1):
        for k in range(1, k_max + 1):
            lhs = math.log2(math.comb(n * k + k, k))
            rhs = (n + 1) * k * _h2(1.0 / (n + 1))
            reports.append(CheckReport("E26", {"n": n, "k": k}, [lhs], [rhs], rhs - lhs))
    return reports


_CHECKS = {
    "L1": check_l1,
    "L2": check_l2,
    "L3": check_l3,
    "L5": check_l5,
    "P1": check_p1,
    "P2": check_p2,
    "C3": check_c3,
    "T5": check_t5,
    "E26": check_e26,
    "H": check_h,
}


def verify(check_id: str, config: dict | None = None, seed: int = 0) -> list[CheckReport]:
    """Run one check (or ``"all"``) and return its reports in a stable order."""
    config = dict(config or {})
    ids = CHECK_IDS if check_id == "all" else (check_id,)
    reports: list[CheckReport] = []
    for cid in ids:
        if cid not in _CHECKS:
            raise HarnessError(f"unknown check id {cid!r}; expected one of {', '.join(CHECK_IDS)}")
        start = time.perf_counter()
        # with "all", per-check overrides live under the check id
        sub = config.get(cid, {}) if check_id == "all" else config
        batch = _CHECKS[cid](sub, seed)
        if not batch:
            raise HarnessError(f"{cid}: configuration produced no instances (is n below K(eps)?)")
        elapsed = (time.perf_counter() - start) / max(len(batch), 1)
        for rep in batch:
            rep.runtime_s = elapsed
        reports.extend(batch)
    return reports
