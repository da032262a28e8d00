"""Sequential treatment-assignment state machines and balance diagnostics.

Each scheme consumes patients one at a time (enrollment order) and returns an
arm label in ``1..k``. The whole assignment stream is a deterministic function
of (seed, ordered inputs): draws come from one substream of the package PRNG
policy (see :mod:`covadjust.rng`), so reruns reproduce bit for bit on any
platform or thread count. A state instance is single-threaded by construction;
run distinct states on distinct stream ids for parallel work.

Scheme behavior within a stratum of the joint randomization covariate:

* permuted block: a queue is refilled with ``block_size`` labels containing
  arm t exactly ``block_size * pi_t`` times, shuffled, then popped per
  patient. Prefix imbalance is bounded by the block size and vanishes at
  block boundaries.
* biased coin: with probability ``bias`` the arm is drawn pi-proportionally
  from the currently most under-represented arms, else pi-proportionally
  from all arms.
* minimization balances margins of the covariate rather than joint strata;
  see :class:`covadjust.data.PocockSimonMinimization` for the rule.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import (
    ArmAllocation,
    PocockSimonMinimization,
    SchemeSpec,
    Simple,
    StratifiedBiasedCoin,
    StratifiedPermutedBlock,
)
from .errors import UnknownMargin
from .rng import substream

_TIE_TOL = 1e-9


class RandomizerState:
    """Mutable assignment state for one enrollment sequence."""

    def __init__(
        self,
        scheme: SchemeSpec,
        seed: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        stream: int = 0,
    ):
        if rng is None:
            if seed is None:
                raise ValueError("provide a seed (or an explicit generator)")
            rng = substream(seed, stream)
        self.scheme = scheme
        self.rng = rng
        self.k = scheme.allocation.k
        self._pi = [float(v) for v in scheme.allocation.pi]
        self._cum_pi = np.cumsum(scheme.allocation.pi).tolist()
        self.counts: dict[str, list[int]] = {}
        self.queues: dict[str, deque[int]] = {}
        kind = scheme.kind
        if isinstance(kind, PocockSimonMinimization):
            self.margin_counts: list[dict[str, list[int]]] = [
                {} for _ in kind.weights
            ]
        else:
            self.margin_counts = []
        if isinstance(kind, StratifiedPermutedBlock):
            comp: list[int] = []
            for t in range(self.k):
                comp.extend([t] * int(round(kind.block_size * self._pi[t])))
            self._block_template = comp

    def _draw_pi(self, cum: list[float]) -> int:
        u = self.rng.random() * cum[-1]
        return min(bisect_right(cum, u), len(cum) - 1)

    def _assign_simple(self) -> int:
        u = self.rng.random()
        return min(bisect_right(self._cum_pi, u), self.k - 1)

    def _assign_block(self, z: str) -> int:
        queue = self.queues.get(z)
        if queue is None:
            queue = deque()
            self.queues[z] = queue
        if not queue:
            block = list(self._block_template)
            self.rng.shuffle(block)
            queue.extend(block)
        return queue.popleft()

    def _assign_biased_coin(self, z: str, counts: list[int]) -> int:
        n_z = sum(counts)
        dev = [counts[t] - self._pi[t] * n_z for t in range(self.k)]
        m = min(dev)
        under = [t for t in range(self.k) if dev[t] <= m + _TIE_TOL]
        if self.rng.random() < self.scheme.kind.bias:
            cum, total = [], 0.0
            for t in under:
                total += self._pi[t]
                cum.append(total)
            return under[self._draw_pi(cum)]
        return self._assign_simple()

    def _assign_minimization(self, margins: Sequence[str]) -> int:
        kind = self.scheme.kind
        weights = kind.weights
        if len(margins) != len(weights):
            raise UnknownMargin(
                f"expected {len(weights)} margin levels, got {len(margins)}"
            )
        level_counts = []
        for j, level in enumerate(margins):
            table = self.margin_counts[j]
            counts = table.get(str(level))
            if counts is None:
                counts = [0] * self.k
                table[str(level)] = counts
            level_counts.append(counts)
        scores = []
        for t in range(self.k):
            total = 0.0
            for w, counts in zip(weights, level_counts):
                if w == 0.0:
                    continue
                hi = -np.inf
                lo = np.inf
                for s in range(self.k):
                    v = (counts[s] + (1 if s == t else 0)) / self._pi[s]
                    if v > hi:
                        hi = v
                    if v < lo:
                        lo = v
                total += w * (hi - lo)
            scores.append(total)
        best_score = min(scores)
        ties = [t for t in range(self.k) if scores[t] <= best_score + _TIE_TOL]
        best = ties[0] if len(ties) == 1 else ties[int(self.rng.random() * len(ties))]
        if kind.p_best < 1.0 and self.rng.random() >= kind.p_best:
            others = [t for t in range(self.k) if t != best]
            cum, total = [], 0.0
            for t in others:
                total += self._pi[t]
                cum.append(total)
            best = others[self._draw_pi(cum)]
        for counts in level_counts:
            counts[best] += 1
        return best

    def assign(self, z: str = "", margins: Sequence[str] = ()) -> int:
        """Assign the next patient; returns an arm label in 1..k."""
        z = str(z)
        kind = self.scheme.kind
        counts = self.counts.get(z)
        if counts is None:
            counts = [0] * self.k
            self.counts[z] = counts
        if isinstance(kind, Simple):
            arm = self._assign_simple()
        elif isinstance(kind, StratifiedPermutedBlock):
            arm = self._assign_block(z)
        elif isinstance(kind, StratifiedBiasedCoin):
            arm = self._assign_biased_coin(z, counts)
        elif isinstance(kind, PocockSimonMinimization):
            arm = self._assign_minimization(margins if margins else (z,))
        else:  # pragma: no cover - SchemeSpec restricts the kinds
            raise TypeError(f"unknown scheme kind {kind!r}")
        counts[arm] += 1
        return arm + 1

    def stratum_counts(self, z: str) -> tuple[int, ...]:
        return tuple(self.counts.get(str(z), [0] * self.k))

    def pending_queue_length(self, z: str) -> int:
        queue = self.queues.get(str(z))
        return len(queue) if queue else 0


def next_assignment(state: RandomizerState, z: str = "", margins: Sequence[str] = ()) -> int:
    """Assign one patient with stratum ``z`` (and margin levels for minimization)."""
    return state.assign(z, margins)


def assign_all(
    scheme: SchemeSpec,
    z: Sequence[str],
    margins: Optional[Sequence[Sequence[str]]] = None,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    stream: int = 0,
) -> np.ndarray:
    """Assign a whole enrollment sequence; identical to folding :func:`next_assignment`.

    ``margins`` is required only for minimization with more than one margin;
    with a single margin the stratum label itself is used.
    """
    n = len(z)
    state = RandomizerState(scheme, seed=seed, rng=rng, stream=stream)
    if isinstance(scheme.kind, Simple):
        # One uniform per patient, exactly as the sequential path consumes them.
        u = state.rng.random(n)
        cum = np.cumsum(scheme.allocation.pi)
        arms0 = np.minimum(np.searchsorted(cum, u, side="right"), scheme.k - 1)
        for zi, arm in zip(z, arms0):
            counts = state.counts.setdefault(str(zi), [0] * state.k)
            counts[arm] += 1
        return (arms0 + 1).astype(np.int64)
    out = np.empty(n, dtype=np.int64)
    if margins is None:
        for i in range(n):
            out[i] = state.assign(z[i])
    else:
        if len(margins) != n:
            raise UnknownMargin(f"margins has length {len(margins)}, expected {n}")
        for i in range(n):
            out[i] = state.assign(z[i], margins[i])
    return out


@dataclass(frozen=True)
class BalanceRow:
    """Within-stratum counts and deviations from the target proportions."""

    stratum: str
    n: int
    counts: tuple[int, ...]
    deviations: tuple[float, ...]


def balance_report(arms, z, allocation: ArmAllocation) -> list[BalanceRow]:
    """Per-stratum table of n(z), n_t(z), and n_t(z)/n(z) - pi_t.

    Only observed strata appear; within each row the deviations sum to zero.
    """
    arms = np.asarray(arms, np.int64)
    z = [str(v) for v in z]
    if arms.size != len(z):
        raise ValueError("arms and z must have equal length")
    k = allocation.k
    table: dict[str, list[int]] = {}
    for arm, zi in zip(arms, z):
        counts = table.setdefault(zi, [0] * k)
        counts[arm - 1] += 1
    rows = []
    for stratum in sorted(table):
        counts = table[stratum]
        n_z = sum(counts)
        dev = tuple(counts[t] / n_z - float(allocation.pi[t]) for t in range(k))
        rows.append(BalanceRow(stratum, n_z, tuple(counts), dev))
    return rows
