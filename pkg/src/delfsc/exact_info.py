"""Exact information quantities for short blocks.

Rows of every table are input words of ``X**n`` in lexicographic order,
columns are output words of ``Z^{*n}`` in canonical order (length, then
lexicographic).  All quantities are in bits.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel_model import (
    ChannelSpec,
    count_var_words,
    trie_forward,
    var_words,
    words,
)

MAX_CELLS = 20_000_000


class ExactLimitError(ValueError):
    """Requested table exceeds the configured exact-computation limit."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, bracket: float):
        super().__init__(message)
        self.bracket = bracket


def _check_size(rows: int, cols: int, max_cells: int):
    if rows * cols > max_cells:
        raise ExactLimitError(
            f"table of {rows} x {cols} = {rows * cols} cells exceeds max_cells={max_cells}"
        )


@dataclass(frozen=True, eq=False)
class JointLaw:
    n: int
    table: np.ndarray  # [x, z*]
    input_pmf: np.ndarray
    s0: int
    x_size: int
    z_size: int

    def __post_init__(self):
        total = self.table.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"joint law sums to {total!r}")
        if np.abs(self.table.sum(axis=1) - self.input_pmf).max() > 1e-10:
            raise ValueError("joint law rows do not reproduce the input pmf")

    @property
    def output_pmf(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def output_words(self) -> list:
        return list(var_words(self.z_size, self.n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x_index", "z_index", "probability"])
        for xi, zi in zip(*np.nonzero(self.table)):
            writer.writerow([int(xi), int(zi), repr(float(self.table[xi, zi]))])
        return buf.getvalue()


def channel_matrix(spec: ChannelSpec, n: int, max_cells: int = MAX_CELLS) -> np.ndarray:
    """``W[x, z*] = W^n(z* | x, s0)`` for every input and output word."""
    rows = spec.x_size**n
    cols = count_var_words(spec.z_size, n)
    _check_size(rows, cols, max_cells)
    init = np.eye(spec.s_size)[spec.s0][None, :]
    out = np.empty((rows, cols))
    for i, x in enumerate(words(spec.x_size, n)):
        out[i] = trie_forward(x, spec.d, spec.kernel, init)[0].sum(axis=1)
    return out


def joint_law(
    input_pmf: np.ndarray, spec: ChannelSpec, n: int | None = None, max_cells: int = MAX_CELLS
) -> JointLaw:
    input_pmf = np.asarray(input_pmf, dtype=float).ravel()
    if n is None:
        n = round(math.log(input_pmf.size, spec.x_size)) if spec.x_size > 1 else 0
    if input_pmf.size != spec.x_size**n:
        raise ValueError(f"input pmf has {input_pmf.size} cells, expected {spec.x_size}**{n}")
    if abs(input_pmf.sum() - 1.0) > 1e-12 or np.any(input_pmf < 0):
        raise ValueError("input pmf must be a probability vector")
    w = channel_matrix(spec, n, max_cells)
    return JointLaw(n, input_pmf[:, None] * w, input_pmf, spec.s0, spec.x_size, spec.z_size)


def uniform_pmf(x_size: int, n: int) -> np.ndarray:
    return np.full(x_size**n, 1.0 / x_size**n)


# -- entropies --------------------------------------------------------------------


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def mutual_information(law: JointLaw | np.ndarray) -> float:
    table = law.table if isinstance(law, JointLaw) else np.asarray(law)
    px = table.sum(axis=1, keepdims=True)
    pz = table.sum(axis=0, keepdims=True)
    mask = table > 0
    ratio = table[mask] / (px @ pz)[mask]
    return float((table[mask] * np.log2(ratio)).sum())


def conditional_entropy(law: JointLaw | np.ndarray) -> float:
    """``H(X | Z)``."""
    table = law.table if isinstance(law, JointLaw) else np.asarray(law)
    return entropy(table) - entropy(table.sum(axis=0))


def output_conditional_entropy(law: JointLaw | np.ndarray) -> float:
    """``H(Z | X)``."""
    table = law.table if isinstance(law, JointLaw) else np.asarray(law)
    return entropy(table) - entropy(table.sum(axis=1))


def information_density(law: JointLaw, x: int, zstar: int) -> float:
    """``log2 p(x, z*) / (p(x) p(z*))`` for row ``x`` and column ``zstar``."""
    px = law.table[x].sum()
    pz = law.table[:, zstar].sum()
    if px == 0 or pz == 0:
        raise ValueError("information density undefined: zero marginal")
    pxz = law.table[x, zstar]
    if pxz == 0:
        return -math.inf
    return math.log2(pxz / (px * pz))


def information_densities(table: np.ndarray) -> np.ndarray:
    """Elementwise densities on the support (``nan`` off the support)."""
    px = table.sum(axis=1, keepdims=True)
    pz = table.sum(axis=0, keepdims=True)
    out = np.full(table.shape, np.nan)
    mask = table > 0
    out[mask] = np.log2(table[mask] / (px @ pz)[mask])
    return out


def cond_entropy_oracle(spec: ChannelSpec, n: int):
    """Callable ``pmf -> H(X_1^n | Z(X_1^n))`` reusing one channel matrix."""
    w = channel_matrix(spec, n)

    def oracle(pmf: np.ndarray) -> float:
        return conditional_entropy(np.asarray(pmf, float).ravel()[:, None] * w)

    return oracle


# -- side information -------------------------------------------------------------


def segmented_joint(
    input_pmf: np.ndarray, boundaries, spec: ChannelSpec, max_cells: int = MAX_CELLS
) -> np.ndarray:
    """Joint table ``[x, (z*_1, ..., z*_m)]`` of the input and per-segment outputs.

    The output index is row-major over the segments, each in canonical order.
    """
    input_pmf = np.asarray(input_pmf, dtype=float).ravel()
    bounds = [int(t) for t in boundaries]
    if not bounds or bounds[0] < 1 or any(b <= a for a, b in zip(bounds, bounds[1:])):
        raise ValueError(f"boundaries must be strictly increasing from >= 1: {bounds}")
    n = bounds[-1]
    if input_pmf.size != spec.x_size**n:
        raise ValueError(f"input pmf has {input_pmf.size} cells, expected {spec.x_size}**{n}")
    cuts = [0, *bounds]
    sizes = [count_var_words(spec.z_size, b - a) for a, b in zip(cuts, cuts[1:])]
    cols = int(np.prod(sizes))
    _check_size(input_pmf.size, cols, max_cells)
    eye = np.eye(spec.s_size)
    table = np.empty((input_pmf.size, cols))
    for i, x in enumerate(words(spec.x_size, n)):
        acc = eye[spec.s0][None, :]  # [outputs so far, state]
        for a, b in zip(cuts, cuts[1:]):
            seg = trie_forward(x[a:b], spec.d, spec.kernel, eye)  # [s_in, w, s_out]
            acc = np.einsum("as,swt->awt", acc, seg).reshape(-1, spec.s_size)
        table[i] = input_pmf[i] * acc.sum(axis=1)
    return table


def mi_with_block_side_info(
    input_pmf: np.ndarray, boundaries, spec: ChannelSpec, max_cells: int = MAX_CELLS
) -> float:
    """``I(X_1^n; Z(X_{t_0+1}^{t_1}), ..., Z(X_{t_{m-1}+1}^{t_m}) | s0)``."""
    return mutual_information(segmented_joint(input_pmf, boundaries, spec, max_cells))


def side_info_penalty(boundaries) -> float:
    cuts = [0, *boundaries]
    return float(sum(math.log2(b - a + 1) for a, b in zip(cuts, cuts[1:])))


# -- merge map ----------------------------------------------------------------------


@lru_cache(maxsize=None)
def split_count_by_length(length: int, k: int, n: int) -> int:
    """Ordered ways to cut a word of ``length`` into ``k`` pieces of length <= ``n``."""
    ways = [1] + [0] * length
    for _ in range(k):
        nxt = [0] * (length + 1)
        for total, w in enumerate(ways):
            if w:
                for piece in range(min(n, length - total) + 1):
                    nxt[total + piece] += w
        ways = nxt
    return ways[length]


def split_count(v, k: int, n: int) -> int:
    """``g_phi(v)``: number of k-tuples of words of length <= n concatenating to ``v``."""
    if len(v) > k * n:
        return 0
    return split_count_by_length(len(v), k, n)


@dataclass(frozen=True)
class MergeDeficiency:
    expected_abs_change: float  # E|iota(X,Y) - iota(X, phi(Y))|
    prob_change: float  # Pr[iota(X,Y) != iota(X, phi(Y))]
    max_log_split: float  # max_v log2 g_phi(v)
    prob_not_injective: float  # Pr[g_phi(phi(Y)) != 1]


def blocked_joint(input_pmf: np.ndarray, spec: ChannelSpec, n: int, k: int, max_cells=MAX_CELLS):
    """Joint over inputs of length ``k*n`` and per-block outputs, plus the column
    words (tuples of blocks) in table order."""
    table = segmented_joint(input_pmf, [n * (i + 1) for i in range(k)], spec, max_cells)
    block_words = list(var_words(spec.z_size, n))
    cols = []
    for idx in np.ndindex(*(len(block_words),) * k):
        cols.append(tuple(block_words[i] for i in idx))
    return table, cols


def merge_deficiency(table: np.ndarray, cols: list, n: int, tol: float = 1e-9) -> MergeDeficiency:
    """Effect of merging per-block outputs by concatenation.

    ``table`` is a joint over (input, k-tuple of block outputs) and ``cols``
    the tuples labelling its columns.  Densities that differ by more than
    ``tol`` count as changed.
    """
    k = len(cols[0]) if cols else 1
    merged_of = [tuple(sym for block in c for sym in block) for c in cols]
    keys = sorted(set(merged_of), key=lambda w: (len(w), w))
    key_idx = {w: i for i, w in enumerate(keys)}
    col_to_merged = np.array([key_idx[w] for w in merged_of])
    merged = np.zeros((table.shape[0], len(keys)))
    np.add.at(merged.T, col_to_merged, table.T)

    iota = information_densities(table)
    iota_m = information_densities(merged)[:, col_to_merged]
    mask = table > 0
    diff = np.abs(iota[mask] - iota_m[mask])
    weights = table[mask]
    g = np.array([split_count(w, k, n) for w in merged_of])
    p_cols = table.sum(axis=0)
    max_len = k * n
    return MergeDeficiency(
        expected_abs_change=float((weights * diff).sum()),
        prob_change=float(weights[diff > tol].sum()),
        max_log_split=max(math.log2(split_count_by_length(L, k, n)) for L in range(max_len + 1)),
        prob_not_injective=float(p_cols[g != 1].sum()),
    )


def log2_binomial(a: int, b: int) -> float:
    return math.log2(math.comb(a, b))


def merge_count_bound(n: int, k: int) -> tuple[float, float]:
    """``(log2 C(nk+k, k), (n+1) k h2(1/(n+1)))``."""
    return log2_binomial(n * k + k, k), (n + 1) * k * binary_entropy(1.0 / (n + 1))


# -- capacity -----------------------------------------------------------------------


def _divergences(w: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``D(W_x || r W)`` for every row ``x`` (bits)."""
    q = r @ w
    mask = w > 0
    ratio = np.where(mask, w / np.where(q > 0, q, 1.0)[None, :], 1.0)
    return np.where(mask, w * np.log2(ratio), 0.0).sum(axis=1)


def blahut_arimoto(
    w: np.ndarray, tol: float = 1e-9, max_iter: int = 200_000
) -> tuple[float, np.ndarray, list[float]]:
    """Capacity (bits per use) of the channel with rows ``w[x]``.

    Stops when ``max_x D(W_x||q) - I(r)`` is at most ``tol``.  Returns the lower
    value ``I(r)``, the input law, and the history of lower values.
    """
    w = np.asarray(w, dtype=float)
    r = np.full(w.shape[0], 1.0 / w.shape[0])
    history: list[float] = []
    gap = math.inf
    for _ in range(max_iter):
        div = _divergences(w, r)
        lower = float(r @ div)
        upper = float(div.max())
        history.append(lower)
        gap = upper - lower
        if gap <= tol:
            return lower, r, history
        r = r * np.exp2(div - upper)
        r /= r.sum()
    raise ConvergenceError(
        f"Blahut-Arimoto did not converge in {max_iter} iterations (bracket {gap:.3e})", gap
    )


def exact_cn(
    spec: ChannelSpec, n: int, tol: float = 1e-9, max_iter: int = 200_000
) -> tuple[float, np.ndarray]:
    """``C_n(s0)`` in bits per symbol and an input law achieving it within ``tol``."""
    lower, r, _ = blahut_arimoto(channel_matrix(spec, n), tol * n, max_iter)
    return lower / n, r
