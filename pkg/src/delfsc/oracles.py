"""Brute-force reference computations.

Everything here enumerates deletion masks, state sequences or words
explicitly.  None of it goes through the lattice or trie dynamic programs,
so these functions can serve as independent checks on them.
"""
from __future__ import annotations

from collections import defaultdict
from itertools import product

import numpy as np

from .channel_model import ChannelSpec, deletion_law, var_words


def embedding_count(x, y) -> int:
    x, y = tuple(x), tuple(y)
    n = len(x)
    hits = 0
    for mask in product((0, 1), repeat=n):
        if tuple(a for a, keep in zip(x, mask) if keep) == y:
            hits += 1
    return hits


def fsc_prob(x, z, s0: int, kernel: np.ndarray) -> float:
    """``W2(z | x, s0)`` summed over every state sequence."""
    s_size = kernel.shape[0]
    total = 0.0
    for states in product(range(s_size), repeat=len(x)):
        p, prev = 1.0, s0
        for xi, zi, s in zip(x, z, states):
            p *= kernel[prev, xi, zi, s]
            prev = s
        total += p
    return total


def fsc_state_law(x, s0: int, kernel: np.ndarray) -> np.ndarray:
    """``p(s_n | x, s0)`` summed over every output and state sequence."""
    s_size, _, z_size, _ = kernel.shape
    law = np.zeros(s_size)
    if len(x) == 0:
        law[s0] = 1.0
        return law
    for states in product(range(s_size), repeat=len(x)):
        for zs in product(range(z_size), repeat=len(x)):
            p, prev = 1.0, s0
            for xi, zi, s in zip(x, zs, states):
                p *= kernel[prev, xi, zi, s]
                prev = s
            law[states[-1]] += p
    return law


def concat_law(x, zstar, spec: ChannelSpec) -> float:
    """Sum over every intermediate word ``x*`` with ``l(x*) = l(z*)``."""
    ell = len(zstar)
    total = 0.0
    for xstar in product(range(spec.x_size), repeat=ell):
        w1 = deletion_law(x, xstar, spec.d)
        if w1:
            total += w1 * fsc_prob(xstar, zstar, spec.s0, spec.kernel)
    return total


def fsc_output_table(xstar, s_init: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """``[w, s]``: probability of FSC output word ``w`` (lexicographic over
    ``Z^len``) and final state ``s`` for input ``xstar``."""
    s_size, _, z_size, _ = kernel.shape
    v = np.asarray(s_init, dtype=float)[None, :]
    for sym in xstar:
        v = np.einsum("as,szu->azu", v, kernel[:, sym]).reshape(-1, s_size)
    return v


def _split(seq, counts):
    out, pos = [], 0
    for c in counts:
        out.append(tuple(seq[pos : pos + c]))
        pos += c
    return tuple(out)


def segmented_law(x, boundaries, spec: ChannelSpec, s_init=None) -> dict:
    """Law of the per-segment outputs given input ``x``.

    Enumerates all ``2^n`` deletion masks; the surviving word runs through the
    FSC in one piece and its output is cut according to how many symbols of
    each segment survived.  Returns ``{(z*_1, ..., z*_m): prob}``.
    """
    x = tuple(int(v) for v in x)
    n, d = len(x), spec.d
    cuts = [0, *boundaries]
    if s_init is None:
        s_init = np.eye(spec.s_size)[spec.s0]
    grouped = defaultdict(float)
    for mask in product((0, 1), repeat=n):
        kept = sum(mask)
        w = (1.0 - d) ** kept * d ** (n - kept)
        if w == 0.0:
            continue
        xstar = tuple(a for a, keep in zip(x, mask) if keep)
        counts = tuple(sum(mask[cuts[i] : cuts[i + 1]]) for i in range(len(cuts) - 1))
        grouped[(xstar, counts)] += w
    law = defaultdict(float)
    for (xstar, counts), w in grouped.items():
        table = fsc_output_table(xstar, s_init, spec.kernel).sum(axis=1)
        for zs, p in zip(product(range(spec.z_size), repeat=len(xstar)), table):
            if p:
                law[_split(zs, counts)] += w * p
    return dict(law)


def joint_from_rows(rows: dict) -> tuple[np.ndarray, list]:
    """Stack ``{x_index: {y_key: p}}`` into a dense ``[x, y]`` array."""
    keys = sorted({y for row in rows.values() for y in row})
    col = {y: i for i, y in enumerate(keys)}
    size = max(rows) + 1 if rows else 0
    table = np.zeros((size, len(keys)))
    for xi, row in rows.items():
        for y, p in row.items():
            table[xi, col[y]] += p
    return table, keys


def plain_output_law(x, spec: ChannelSpec) -> dict:
    """``{z*: W^n(z* | x, s0)}`` for every reachable output word."""
    law = segmented_law(x, [len(x)], spec) if len(x) else {((),): 1.0}
    return {key[0]: p for key, p in law.items()}


def all_var_words(size: int, max_len: int) -> list:
    return list(var_words(size, max_len))


# -- information measures on dense tables (bits) -------------------------------


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def mutual_information(joint: np.ndarray) -> float:
    """``I(A; B)`` for a 2-d joint table."""
    return (
        entropy(joint.sum(axis=1)) + entropy(joint.sum(axis=0)) - entropy(joint)
    )


def conditional_mi(joint: np.ndarray, a, b, given) -> float:
    """``I(A; B | C)`` for an n-d joint table; arguments are axis tuples."""
    axes = set(range(joint.ndim))

    def h(keep):
        drop = tuple(sorted(axes - set(keep)))
        return entropy(joint.sum(axis=drop) if drop else joint)

    a, b, given = tuple(a), tuple(b), tuple(given)
    return h(a + given) + h(b + given) - h(a + b + given) - h(given)
