"""Active-elimination ranker for stochastic payoffs and arbitrary window sequences.

The ranker keeps per-item payoff statistics and, each trial, rebuilds the
displayed ranking top-down: among the items still unplaced, those whose upper
confidence bound beats every lower confidence bound are contenders; the
least-played contender goes next, immediately followed by every unplaced item
of lower utility ("blocked": a user who can see past them can also see the
contender, and prefers it). Blocking is what lets one shared top slot explore
without giving up payoff at larger windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import OptimalFamily, Permutation


@dataclass(frozen=True)
class RankerConfig:
    n: int
    delta: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must be in (0, 1]")


@dataclass(frozen=True)
class ItemStats:
    """Payoff record of one item: cumulative payoff and selection count."""

    reward_sum: float
    count: int

    def mean(self) -> float:
        """Empirical mean payoff; 0 before the first observation."""
        return self.reward_sum / self.count if self.count else 0.0

    def radius(self, t: int, n: int, delta: float) -> float:
        """Confidence radius sqrt(log(4 n t^2 / delta) / count); infinite when unseen."""
        if self.count == 0:
            return math.inf
        return math.sqrt(math.log(4.0 * n * t * t / delta) / self.count)


def find_permutation(rewards: Sequence[float], counts: Sequence[int], t: int,
                     delta: float, utilities: Sequence[float]) -> Permutation:
    """One top-down pass of the elimination rule at trial ``t``.

    Ties for the least-played contender break toward the lowest item index,
    and each blocked set is appended in ascending item index, so the output
    is a deterministic function of the statistics.
    """
    n = len(counts)
    log_term = math.log(4.0 * n * t * t / delta)
    upper = [0.0] * n
    lower = [0.0] * n
    for i in range(n):
        c = counts[i]
        if c == 0:
            upper[i] = math.inf
            lower[i] = -math.inf
        else:
            mean = rewards[i] / c
            radius = math.sqrt(log_term / c)
            upper[i] = mean + radius
            lower[i] = mean - radius

    remaining = list(range(n))
    out: list[int] = []
    while remaining:
        max_lower = max(lower[j] for j in remaining)
        contenders = [i for i in remaining if upper[i] > max_lower]
        pick = min(contenders, key=lambda i: (counts[i], i))
        blocked = [j for j in remaining if j != pick and utilities[j] < utilities[pick]]
        out.append(pick)
        out.extend(blocked)
        placed = set(blocked)
        placed.add(pick)
        remaining = [j for j in remaining if j not in placed]
    return tuple(out)


class EliminationRanker:
    """Policy wrapper around :func:`find_permutation` with running statistics."""

    def __init__(self, n: int, delta: float):
        self.config = RankerConfig(n=n, delta=delta)
        self.rewards = [0.0] * n
        self.counts = [0] * n

    def act(self, t: int, utilities: Sequence[float]) -> Permutation:
        return find_permutation(self.rewards, self.counts, t, self.config.delta, utilities)

    def feed(self, t: int, item: int, payoff: float) -> None:
        self.rewards[item] += payoff
        self.counts[item] += 1

    def stats(self, item: int) -> ItemStats:
        return ItemStats(reward_sum=self.rewards[item], count=self.counts[item])


def inversion_budget_value(gap: float, horizon: int, delta: float, n: int) -> float:
    """Pre-ceiling value ``4 log(4 n T^2 / delta) / gap^2`` of the inversion budget."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    return 4.0 * math.log(4.0 * n * float(horizon) ** 2 / delta) / (gap * gap)


def inversion_budget(gap: float, horizon: int, delta: float, n: int) -> int:
    """Max times a specific worse item can be picked over a better benchmark item.

    Holds on every run where all confidence intervals contain their true
    means throughout (which has probability at least ``1 - delta``).
    """
    return math.ceil(inversion_budget_value(gap, horizon, delta, n))


def confidence_event_holds(selected: Sequence[int], payoffs: Sequence[float],
                           means: Sequence[float], delta: float) -> bool:
    """Replay a trace and check every interval contained its true mean throughout.

    Each update is checked at the trial it lands on; radii only grow with t
    while the empirical mean stays put between updates, so this is the
    binding moment for the whole run.
    """
    n = len(means)
    rewards = [0.0] * n
    counts = [0] * n
    for t0 in range(len(selected)):
        t = t0 + 1
        y = int(selected[t0])
        rewards[y] += float(payoffs[t0])
        counts[y] += 1
        radius = math.sqrt(math.log(4.0 * n * t * t / delta) / counts[y])
        if abs(rewards[y] / counts[y] - means[y]) > radius:
            return False
    return True


def count_inversions(windows: Sequence[int], selected: Sequence[int],
                     family: OptimalFamily, means: Sequence[float]) -> dict[tuple[int, int], int]:
    """Count, per ordered pair, the trials where a strictly worse item was picked.

    Keyed by ``(benchmark item at that window, picked item)``; only pairs with
    a positive mean gap are counted.
    """
    windows = np.asarray(windows, dtype=np.int64)
    selected = np.asarray(selected, dtype=np.int64)
    means = np.asarray(means, dtype=float)
    bench_arr = np.asarray(family.benchmark_by_window, dtype=np.int64)
    bench = bench_arr[windows - 1]
    mask = means[bench] > means[selected]
    out: dict[tuple[int, int], int] = {}
    for s, y in zip(bench[mask].tolist(), selected[mask].tolist()):
        key = (s, y)
        out[key] = out.get(key, 0) + 1
    return out
