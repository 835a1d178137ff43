"""Input processes: order-m Markov chains, block processes, and helpers.

Contexts of an order-``m`` chain are the last ``m`` symbols, indexed
lexicographically with the oldest symbol most significant.  A sampled path is
preceded by a hidden context drawn from the stationary law, so every emitted
symbol is a Markov step and the path is stationary from its first symbol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10
DIRECT_SOLVE_MAX = 4096

PRECONTEXT_STREAM = 0
PATH_STREAM = 1


class InputModelError(ValueError):
    pass


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


@dataclass(frozen=True, eq=False)
class MarkovInputSpec:
    """Order-``m`` chain with transition table ``q[context, x]``."""

    m: int
    q: np.ndarray
    _stationary: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if self.m < 0:
            raise InputModelError("order m must be >= 0")
        if q.ndim != 2 or q.shape[1] < 1:
            raise InputModelError(f"q must be a 2-d table, got shape {q.shape}")
        if q.shape[0] != q.shape[1] ** self.m:
            raise InputModelError(
                f"q has {q.shape[0]} rows, expected {q.shape[1]}**{self.m}"
            )
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise InputModelError("transition probabilities must be finite and >= 0")
        dev = np.abs(q.sum(axis=1) - 1.0)
        if dev.max() > ROW_TOL:
            c = int(dev.argmax())
            raise InputModelError(f"context {c} row sums to {q[c].sum()!r}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def x_size(self) -> int:
        return self.q.shape[1]

    @property
    def n_contexts(self) -> int:
        return self.q.shape[0]

    @property
    def stationary(self) -> np.ndarray:
        if self._stationary is None:
            object.__setattr__(self, "_stationary", stationary_distribution(self))
        return self._stationary

    def next_context(self) -> np.ndarray:
        """``nxt[c, x]``: context reached from ``c`` after emitting ``x``."""
        c = np.arange(self.n_contexts)[:, None]
        x = np.arange(self.x_size)[None, :]
        return (c * self.x_size + x) % self.n_contexts

    def transition_matrix(self) -> np.ndarray:
        """Lifted chain on contexts."""
        size = self.n_contexts
        p = np.zeros((size, size))
        nxt = self.next_context()
        for x in range(self.x_size):
            np.add.at(p, (np.arange(size), nxt[:, x]), self.q[:, x])
        return p

    def to_json(self) -> dict:
        return {"m": self.m, "q": self.q.tolist()}


def uniform_markov(x_size: int, m: int) -> MarkovInputSpec:
    return MarkovInputSpec(m, np.full((x_size**m, x_size), 1.0 / x_size))


def lift(spec: MarkovInputSpec) -> MarkovInputSpec:
    """The same process written as an order ``m+1`` chain."""
    rows = np.tile(spec.q, (spec.x_size, 1))
    return MarkovInputSpec(spec.m + 1, rows)


def closed_classes(p: np.ndarray) -> int:
    """Number of closed communicating classes of a transition matrix."""
    n_comp, labels = connected_components(p > 0, directed=True, connection="strong")
    closed = 0
    for comp in range(n_comp):
        members = labels == comp
        if not (p[members][:, ~members] > 0).any():
            closed += 1
    return closed


def period(p: np.ndarray) -> int:
    """Period of an irreducible chain (gcd of cycle lengths through state 0)."""
    size = p.shape[0]
    level = np.full(size, -1)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(p[u] > 0):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
                else:
                    g = math.gcd(g, int(level[u] + 1 - level[v]))
        frontier = nxt
    return g


def is_irreducible_aperiodic(spec: MarkovInputSpec) -> bool:
    p = spec.transition_matrix()
    n_comp, _ = connected_components(p > 0, directed=True, connection="strong")
    return n_comp == 1 and period(p) == 1


def stationary_distribution(spec: MarkovInputSpec) -> np.ndarray:
    """Stationary law of the lifted context chain (shape ``(X**m,)``)."""
    if spec.m == 0:
        return np.ones(1)
    p = spec.transition_matrix()
    size = p.shape[0]
    n_closed = closed_classes(p)
    if n_closed != 1:
        raise InputModelError(
            f"lifted chain is reducible with {n_closed} closed classes; "
            "stationary law is not unique"
        )
    if size <= DIRECT_SOLVE_MAX:
        a = p.T - np.eye(size)
        a[-1] = 1.0
        rhs = np.zeros(size)
        rhs[-1] = 1.0
        pi = np.linalg.solve(a, rhs)
    else:
        # lazy chain: same fixed point, aperiodic
        lazy = 0.5 * (p + np.eye(size))
        pi = np.full(size, 1.0 / size)
        for _ in range(100_000):
            nxt = pi @ lazy
            if np.abs(nxt - pi).sum() < 1e-14:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ p - pi).sum()
    if resid > STATIONARY_TOL:
        raise InputModelError(f"stationary residual {resid:.3e} exceeds {STATIONARY_TOL}")
    return pi


def _inverse_cdf(cum: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


def sample_precontext(spec: MarkovInputSpec, seed) -> int:
    """Draw the hidden context from the stationary law, newest symbol first.

    Drawing newest-first means the first ``m`` uniforms fix the same ``m`` most
    recent symbols for any order that describes the same process.
    """
    m, xs = spec.m, spec.x_size
    if m == 0:
        return 0
    u = _rng(seed, PRECONTEXT_STREAM).random(m)
    pi = spec.stationary.reshape((xs,) * m)
    chosen: list[int] = []  # newest first
    for j in range(m):
        window = pi.sum(axis=tuple(range(m - j - 1))) if m - j - 1 else pi
        # window has axes (x_{-j}, ..., x_0); condition on the newer symbols
        cond = window[(slice(None), *reversed(chosen))] if chosen else window
        total = cond.sum()
        cum = np.cumsum(cond / total) if total > 0 else np.cumsum(np.full(xs, 1 / xs))
        chosen.append(_inverse_cdf(cum, u[j]))
    ctx = 0
    for sym in reversed(chosen):  # oldest first
        ctx = ctx * xs + sym
    return ctx


def sample_path(spec: MarkovInputSpec, length: int, seed: int) -> np.ndarray:
    """Stationary path of ``length`` symbols; deterministic given ``seed``."""
    u = _rng(seed, PATH_STREAM).random(length)
    xs = spec.x_size
    if spec.m == 0:
        cum = np.cumsum(spec.q[0])
        return np.minimum(np.searchsorted(cum, u, side="right"), xs - 1).astype(np.int64)
    cum = np.cumsum(spec.q, axis=1)
    nxt = spec.next_context()
    ctx = sample_precontext(spec, seed)
    path = np.empty(length, dtype=np.int64)
    for t in range(length):
        sym = _inverse_cdf(cum[ctx], u[t])
        path[t] = sym
        ctx = nxt[ctx, sym]
    return path


def block_pmf(spec: MarkovInputSpec, n: int, context_law: np.ndarray | None = None) -> np.ndarray:
    """Law of ``n`` consecutive symbols over ``X**n`` (lexicographic).

    ``context_law`` is the law of the hidden preceding context; the
    stationary law by default.
    """
    law = spec.stationary if context_law is None else np.asarray(context_law, float)
    nxt = spec.next_context()
    xs = spec.x_size
    mass = law[None, :].copy()  # [path prefix, context]
    for _ in range(n):
        new = np.zeros((mass.shape[0] * xs, spec.n_contexts))
        for x in range(xs):
            contrib = mass * spec.q[:, x][None, :]
            dest = np.zeros((mass.shape[0], spec.n_contexts))
            np.add.at(dest.T, nxt[:, x], contrib.T)
            new[x::xs] = dest
        mass = new
    return mass.sum(axis=1)


def chain_from_joint(joint: np.ndarray) -> MarkovInputSpec:
    """Order-m chain whose transitions are the conditionals of an ``(m+1)``-block law.

    Contexts of zero probability get a uniform row.
    """
    joint = np.asarray(joint, dtype=float)
    xs = joint.shape[0]
    m = joint.ndim - 1
    table = joint.reshape(xs**m, xs)
    rows = table.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(rows > 0, table / np.where(rows > 0, rows, 1.0), 1.0 / xs)
    q /= q.sum(axis=1, keepdims=True)
    return MarkovInputSpec(m, q)


def _entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def next_symbol_entropy(joint: np.ndarray) -> float:
    """``H(X_{m+1} | X_1^m)`` computed from the ``(m+1)``-block law."""
    joint = np.asarray(joint, dtype=float)
    return _entropy(joint) - _entropy(joint.sum(axis=-1))


@dataclass(frozen=True)
class Perturbation:
    chain: MarkovInputSpec
    joint: np.ndarray
    delta_positive: float
    delta_zero: float
    next_symbol_gap: float
    cond_entropy_gap: float

    @property
    def gap(self) -> float:
        return max(self.next_symbol_gap, self.cond_entropy_gap)


class PerturbationError(InputModelError):
    def __init__(self, message: str, achieved_gap: float):
        super().__init__(message)
        self.achieved_gap = achieved_gap


def perturb_to_irreducible(
    joint: np.ndarray,
    target_gap: float,
    cond_entropy_oracle: Callable[[np.ndarray], float],
    ref_n: int,
    max_iter: int = 60,
) -> Perturbation:
    """Make every transition positive while keeping two entropies within ``target_gap``.

    Positive cells of the ``(m+1)``-block law lose ``delta_positive``, zero
    cells gain ``delta_zero``, with ``delta_positive * #pos = delta_zero * #zero``
    so the total stays 1.  ``delta_zero`` is bisected until both

    * ``|H(X_{m+1}|X_1^m)`` change| and
    * ``|H(X_1^n | Z(X_1^n))`` change| / n at ``n = ref_n``

    are within ``target_gap``.  ``cond_entropy_oracle`` maps a law over
    ``X**ref_n`` to ``H(X_1^n | Z(X_1^n))`` in bits.  The block law used for
    the second condition starts the chain from the context marginal of the
    (perturbed) joint.
    """
    joint = np.asarray(joint, dtype=float)
    if abs(joint.sum() - 1.0) > 1e-12 or np.any(joint < 0):
        raise InputModelError("joint must be a probability table")
    positive = joint > 0
    n_pos, n_zero = int(positive.sum()), int((~positive).sum())
    if n_zero == 0:
        return Perturbation(chain_from_joint(joint), joint, 0.0, 0.0, 0.0, 0.0)
    if target_gap <= 0:
        raise PerturbationError(
            "target_gap must be > 0 when the joint has zero cells", math.inf
        )

    base_next = next_symbol_entropy(joint)
    base_chain = chain_from_joint(joint)
    base_law = joint.reshape(-1, joint.shape[0]).sum(axis=1)
    base_cond = cond_entropy_oracle(block_pmf(base_chain, ref_n, base_law)) / ref_n

    def build(delta_zero: float):
        delta_pos = delta_zero * n_zero / n_pos
        new = np.where(positive, joint - delta_pos, delta_zero)
        new /= new.sum()
        chain = chain_from_joint(new)
        law = new.reshape(-1, new.shape[0]).sum(axis=1)
        g_next = abs(next_symbol_entropy(new) - base_next)
        g_cond = abs(cond_entropy_oracle(block_pmf(chain, ref_n, law)) / ref_n - base_cond)
        return Perturbation(chain, new, delta_pos, delta_zero, g_next, g_cond)

    # keep every positive cell strictly positive
    upper = 0.5 * joint[positive].min() * n_pos / n_zero
    trial = build(upper)
    if trial.gap <= target_gap:
        return trial
    lo, hi = 0.0, upper
    best, last_gap = None, trial.gap
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        trial = build(mid)
        last_gap = trial.gap
        if trial.gap <= target_gap:
            best, lo = trial, mid
            if hi - lo <= 1e-3 * hi:
                break
        else:
            hi = mid
    if best is None:
        raise PerturbationError(
            f"no perturbation met target_gap={target_gap} within {max_iter} "
            f"bisection steps (last gap {last_gap:.3e})",
            last_gap,
        )
    return best


@dataclass(frozen=True, eq=False)
class BlockProcessSpec:
    """i.i.d. blocks of length ``n`` with law ``pmf`` over ``X**n``."""

    n: int
    pmf: np.ndarray
    x_size: int
    shift: str = "uniform"

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float).ravel()
        if self.n < 1:
            raise InputModelError("block length must be >= 1")
        if pmf.size != self.x_size**self.n:
            raise InputModelError(f"pmf has {pmf.size} cells, expected {self.x_size}**{self.n}")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > ROW_TOL:
            raise InputModelError("block pmf must be nonnegative and sum to 1")
        if self.shift not in ("uniform", "none"):
            raise InputModelError(f"shift must be 'uniform' or 'none', got {self.shift!r}")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    def to_json(self) -> dict:
        return {"n": self.n, "x_size": self.x_size, "pmf": self.pmf.tolist(), "shift": self.shift}


class StationarySampler:
    """Paths of a block-i.i.d. process seen from a uniform random phase.

    Each call to :meth:`sample` draws one phase ``V`` and returns
    ``X_hat[1+V], X_hat[2+V], ...``; :attr:`last_shift` records ``V``.
    """

    def __init__(self, block: BlockProcessSpec, seed: int):
        if block.shift != "uniform":
            raise InputModelError("stationarize needs a block process with uniform shift")
        self.block = block
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
        self._cum = np.cumsum(block.pmf)
        self.last_shift: int | None = None

    def sample(self, length: int) -> np.ndarray:
        n, xs = self.block.n, self.block.x_size
        shift = int(self._rng.integers(n))
        n_blocks = -(-(length + shift) // n)
        u = self._rng.random(n_blocks)
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self._cum) - 1)
        digits = np.array(np.unravel_index(idx, (xs,) * n)).T.reshape(-1)
        self.last_shift = shift
        return digits[shift : shift + length].astype(np.int64)


def stationarize(block: BlockProcessSpec, seed: int) -> StationarySampler:
    return StationarySampler(block, seed)

