"""Deletion channel followed by a finite-state channel (FSC).

Words are integer tuples / 1-d arrays; the empty word is a legitimate value.
Variable-length words over an alphabet of size ``q`` up to length ``n`` are
enumerated by length, then lexicographically (see :func:`var_words`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
U64_MAX = 2**64 - 1


class ChannelError(ValueError):
    """Invalid channel specification or argument."""


class EmbeddingCountOverflow(OverflowError):
    """Subsequence count does not fit in an unsigned 64-bit integer."""


class ZeroProbabilityError(ValueError):
    """A posterior was requested for an observation of probability zero."""


@dataclass(frozen=True)
class Alphabets:
    x_size: int
    z_size: int
    s_size: int

    def __post_init__(self):
        for name in ("x_size", "z_size", "s_size"):
            if int(getattr(self, name)) < 1:
                raise ChannelError(f"{name} must be >= 1")


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """Deletion probability ``d`` plus FSC kernel ``p(z, s | s', x)``.

    ``kernel`` has shape ``(S, X, Z, S)`` and is indexed ``[s_prev, x, z, s_next]``.
    """

    d: float
    kernel: np.ndarray
    s0: int = 0

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[3]:
            raise ChannelError(f"kernel must have shape (S, X, Z, S), got {kernel.shape}")
        if not 0.0 <= float(self.d) <= 1.0:
            raise ChannelError(f"d={self.d} outside [0, 1]")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise ChannelError("kernel entries must be finite and >= 0")
        sums = kernel.sum(axis=(2, 3))
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            sp, x = bad[0]
            raise ChannelError(
                f"kernel row (s'={sp}, x={x}) sums to {sums[sp, x]!r}, expected 1"
            )
        if not 0 <= int(self.s0) < kernel.shape[0]:
            raise ChannelError(f"s0={self.s0} outside 0..{kernel.shape[0] - 1}")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "s0", int(self.s0))

    @property
    def alphabets(self) -> Alphabets:
        s, x, z, _ = self.kernel.shape
        return Alphabets(x, z, s)

    @property
    def x_size(self) -> int:
        return self.kernel.shape[1]

    @property
    def z_size(self) -> int:
        return self.kernel.shape[2]

    @property
    def s_size(self) -> int:
        return self.kernel.shape[0]

    def with_(self, d: float | None = None, s0: int | None = None) -> "ChannelSpec":
        return ChannelSpec(
            self.d if d is None else d, self.kernel, self.s0 if s0 is None else s0
        )

    def state_transitions(self) -> np.ndarray:
        """``P[x, s', s] = sum_z p(z, s | s', x)``."""
        return self.kernel.sum(axis=2).transpose(1, 0, 2)


@dataclass(frozen=True)
class BlockedObservation:
    """Per-block channel outputs; block ``i`` carries the output of input block ``i``."""

    blocks: tuple
    n: int

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.int64).reshape(-1) for b in self.blocks)
        for i, b in enumerate(blocks):
            if len(b) > self.n:
                raise ChannelError(f"block {i} has length {len(b)} > n={self.n}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def deletion_counts(self) -> np.ndarray:
        return np.array([self.n - len(b) for b in self.blocks], dtype=np.int64)

    def concatenated(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.blocks)


# -- word enumeration ---------------------------------------------------------


def count_var_words(size: int, max_len: int) -> int:
    if size == 1:
        return max_len + 1
    return (size ** (max_len + 1) - 1) // (size - 1)


def var_word_offset(size: int, length: int) -> int:
    """Canonical index of the first word of ``length``."""
    return count_var_words(size, length - 1) if length > 0 else 0


def var_words(size: int, max_len: int) -> Iterator[tuple]:
    """All words of length <= ``max_len``: by length, then lexicographic."""
    for length in range(max_len + 1):
        yield from product(range(size), repeat=length)


def var_word_index(word: Sequence[int], size: int) -> int:
    rank = 0
    for sym in word:
        rank = rank * size + int(sym)
    return var_word_offset(size, len(word)) + rank


def words(size: int, length: int) -> np.ndarray:
    """All words of fixed ``length`` as rows, lexicographic (first symbol most significant)."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices((size,) * length).reshape(length, -1).T
    return grid.astype(np.int64)


# -- deletion layer -----------------------------------------------------------


def embedding_count(x: Sequence[int], y: Sequence[int]) -> int:
    """Number of index subsets of ``x`` whose deletion leaves exactly ``y``."""
    x = [int(v) for v in x]
    y = [int(v) for v in y]
    if len(y) > len(x):
        return 0
    # ways[j] = number of embeddings of y[:j] into the prefix of x seen so far
    ways = [1] + [0] * len(y)
    for sym in x:
        for j in range(len(y), 0, -1):
            if y[j - 1] == sym:
                ways[j] += ways[j - 1]
    if ways[-1] > U64_MAX:
        raise EmbeddingCountOverflow(
            f"embedding count for |x|={len(x)}, |y|={len(y)} exceeds 2**64-1"
        )
    return ways[-1]


def deletion_law(x: Sequence[int], xstar: Sequence[int], d: float) -> float:
    """``W1(x* | x) = (1-d)^l(x*) d^(n-l(x*)) K(x, x*)``."""
    if not 0.0 <= d <= 1.0:
        raise ChannelError(f"d={d} outside [0, 1]")
    n, ell = len(x), len(xstar)
    if ell > n:
        raise ChannelError(f"output length {ell} exceeds input length {n}")
    return (1.0 - d) ** ell * d ** (n - ell) * embedding_count(x, xstar)


# -- FSC layer ----------------------------------------------------------------


def fsc_forward(
    x: Sequence[int], z: Sequence[int], s0: int, kernel: np.ndarray
) -> tuple[float, np.ndarray | None]:
    """``W2(z | x, s0)`` and the posterior of the final state.

    The posterior is ``None`` when the observation has probability zero.
    """
    x = np.asarray(x, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if x.shape != z.shape:
        raise ChannelError(f"length mismatch: |x|={len(x)} vs |z|={len(z)}")
    kernel = np.asarray(kernel)
    v = np.zeros(kernel.shape[0])
    v[s0] = 1.0
    log_scale = 0.0
    for xi, zi in zip(x, z):
        v = v @ kernel[:, xi, zi, :]
        total = v.sum()
        if total == 0.0:
            return 0.0, None
        v /= total
        log_scale += math.log(total)
    return math.exp(log_scale), v


def fsc_state_law(x: Sequence[int], s0: int, kernel: np.ndarray) -> np.ndarray:
    """``p(s_n | x, s0)`` with the outputs marginalized."""
    trans = np.asarray(kernel).sum(axis=2)
    v = np.zeros(trans.shape[0])
    v[s0] = 1.0
    for xi in x:
        v = v @ trans[:, int(xi), :]
    return v


# -- concatenated channel -----------------------------------------------------


def lattice_forward(
    x: Sequence[int],
    z: Sequence[int],
    d: float,
    kernel: np.ndarray,
    init: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Forward pass over (position in ``x``, symbols emitted, FSC state).

    Symbol ``x_j`` is either deleted (weight ``d``) or fed to the FSC, which must
    emit the next symbol of ``z``.  Returns ``(v, log2_scale)`` where
    ``2**log2_scale * v[s]`` is the probability of emitting exactly ``z`` and
    ending in state ``s``, starting from the (possibly unnormalized) state
    vector ``init``.  ``v`` is all zeros when that probability is zero.
    """
    x = np.asarray(x, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    n, ell = len(x), len(z)
    s_size = kernel.shape[0]
    init = np.asarray(init, dtype=float)
    if ell > n:
        return np.zeros(s_size), -math.inf
    if ell == 0:
        if n == 0:
            return init.copy(), 0.0
        if d == 0.0:
            return np.zeros(s_size), -math.inf
        return init.copy(), n * math.log2(d)
    # trans[x][t] = p(z_{t+1}, . | ., x) as an (S, S) matrix
    trans = kernel[:, :, z, :].transpose(1, 2, 0, 3)
    alpha = np.zeros((ell + 1, s_size))
    alpha[0] = init
    log_scale = 0.0
    keep = 1.0 - d
    for j in range(n):
        lo = max(0, ell - (n - j))  # rows that can still reach t = ell
        hi = min(j, ell)
        new = np.zeros_like(alpha)
        if d > 0.0:
            new[lo : hi + 1] = d * alpha[lo : hi + 1]
        if keep > 0.0:
            top = min(hi, ell - 1)
            if top >= lo:
                new[lo + 1 : top + 2] += keep * np.einsum(
                    "ts,tsu->tu", alpha[lo : top + 1], trans[x[j], lo : top + 1]
                )
        peak = new.max()
        if peak == 0.0:
            return np.zeros(s_size), -math.inf
        alpha = new / peak
        log_scale += math.log2(peak)
    return alpha[ell], log_scale


def concat_law(x: Sequence[int], zstar: Sequence[int], spec: ChannelSpec) -> float:
    """``W^n(z* | x, s0)`` by the lattice dynamic program."""
    init = np.zeros(spec.s_size)
    init[spec.s0] = 1.0
    v, log_scale = lattice_forward(x, zstar, spec.d, spec.kernel, init)
    total = v.sum()
    if total == 0.0:
        return 0.0
    return float(total * 2.0**log_scale)


def hat_kernel(
    zeta: Sequence[int], zstar: Sequence[int], s: int, spec: ChannelSpec
) -> tuple[np.ndarray, float]:
    """Final-state masses of emitting ``zstar`` from super-symbol ``zeta`` in state ``s``.

    Returns ``(masses, total)`` where ``masses[s']`` is the joint probability of
    the output word and final state ``s'``.
    """
    if len(zstar) > len(zeta):
        raise ChannelError("output word longer than block")
    init = np.zeros(spec.s_size)
    init[s] = 1.0
    v, log_scale = lattice_forward(zeta, zstar, spec.d, spec.kernel, init)
    masses = v * 2.0**log_scale if np.isfinite(log_scale) else np.zeros_like(v)
    return masses, float(masses.sum())


def trie_forward(
    x: Sequence[int], d: float, kernel: np.ndarray, init: np.ndarray
) -> np.ndarray:
    """Output law for every output word at once.

    ``init`` has shape ``(B, S)``; the result has shape ``(B, N, S)`` where ``N``
    counts words of length <= ``len(x)`` in canonical order and entry
    ``[b, w, s]`` is the probability of emitting word ``w`` and ending in ``s``.
    Linear domain; intended for exact-scale block lengths.
    """
    x = np.asarray(x, dtype=np.int64)
    n = len(x)
    z_size = kernel.shape[2]
    init = np.atleast_2d(np.asarray(init, dtype=float))
    b, s_size = init.shape
    offsets = [var_word_offset(z_size, ell) for ell in range(n + 2)]
    table = np.zeros((b, offsets[n + 1], s_size))
    table[:, 0] = init
    for j in range(n):
        step = kernel[:, x[j]]  # (S, Z, S)
        new = d * table
        for ell in range(min(j, n - 1), -1, -1):
            src = table[:, offsets[ell] : offsets[ell + 1]]
            emitted = np.einsum("brs,szu->brzu", src, step).reshape(b, -1, s_size)
            new[:, offsets[ell + 1] : offsets[ell + 2]] += (1.0 - d) * emitted
        table = new
    return table


def hat_kernel_table(zeta: Sequence[int], spec: ChannelSpec) -> np.ndarray:
    """``T[s, w, s']`` for every output word ``w`` of the block ``zeta``."""
    return trie_forward(zeta, spec.d, spec.kernel, np.eye(spec.s_size))


# -- sampling -----------------------------------------------------------------


def _stream(seed, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


DELETION_STREAM = 2
FSC_STREAM = 3


def sample_transmission(
    x: Sequence[int], spec: ChannelSpec, n: int, seed: int
) -> tuple[BlockedObservation, int]:
    """Pass ``x`` (a whole number of length-``n`` blocks) through the channel.

    Each position owns one deletion uniform and one FSC uniform, so two inputs
    sent with the same seed see the same channel noise.
    """
    x = np.asarray(x, dtype=np.int64)
    if n < 1 or len(x) % n:
        raise ChannelError(f"input length {len(x)} is not a multiple of n={n}")
    u_del = _stream(seed, DELETION_STREAM).random(len(x))
    u_fsc = _stream(seed, FSC_STREAM).random(len(x))
    kept = u_del >= spec.d
    s_size = spec.s_size
    cum = np.cumsum(spec.kernel.reshape(s_size, spec.x_size, -1), axis=2)
    last = cum.shape[2] - 1
    state = spec.s0
    out = np.full(len(x), -1, dtype=np.int64)
    for i in np.flatnonzero(kept):
        idx = min(int(np.searchsorted(cum[state, x[i]], u_fsc[i], side="right")), last)
        out[i], state = divmod(idx, s_size)
    blocks = []
    for start in range(0, len(x), n):
        seg = out[start : start + n]
        blocks.append(seg[seg >= 0])
    return BlockedObservation(tuple(blocks), n), int(state)


# -- constructors ---------------------------------------------------------------


def identity_kernel(size: int) -> np.ndarray:
    """Single-state noiseless FSC on an alphabet of ``size`` symbols."""
    kernel = np.zeros((1, size, size, 1))
    for a in range(size):
        kernel[0, a, a, 0] = 1.0
    return kernel


def random_channel_spec(
    seed: int,
    x_size: int = 2,
    z_size: int = 2,
    s_size: int = 2,
    d: float | None = None,
    concentration: float = 1.0,
) -> ChannelSpec:
    """Random kernel with Dirichlet rows; ``d`` drawn from U(0.05, 0.6) if omitted."""
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.full(z_size * s_size, concentration), size=(s_size, x_size))
    kernel = rows.reshape(s_size, x_size, z_size, s_size)
    # re-normalize in float to keep row sums within ROW_SUM_TOL
    kernel /= kernel.sum(axis=(2, 3), keepdims=True)
    if d is None:
        d = float(rng.uniform(0.05, 0.6))
    return ChannelSpec(d, kernel, 0)
