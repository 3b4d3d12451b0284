"""Experience replay with loss-driven priorities.

Each record keeps, besides the transition itself, the critic loss computed
when it was stored, how many times it has been pulled into the extraction
pool, and its current priority.  Priorities follow either the plain
loss-proportional rule or the rank-based rule that also demotes frequently
extracted records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Experience",
    "ReplayBuffer",
    "priority_simple",
    "priority_ranked",
    "fill_extraction_pool",
]


@dataclass
class Experience:
    """One stored transition with its replay bookkeeping."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    loss: float
    n: int = 0
    pr: float = 0.0
    uid: int = field(default=-1)


def _rank_ascending(values: np.ndarray) -> np.ndarray:
    """1-based positions in the ascending stable sort (ties by index)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def priority_simple(losses) -> np.ndarray:
    """Loss-proportional priorities; uniform if every loss is zero."""
    losses = np.asarray(losses, dtype=float)
    if np.any(losses < 0):
        raise ValueError("losses must be nonnegative")
    total = losses.sum()
    if total == 0:
        return np.full(len(losses), 1.0 / len(losses))
    return losses / total


def priority_ranked(losses, counts, mu: float, nu: float) -> np.ndarray:
    """Rank-based priorities demoting often-extracted records.

    Score = rank(rank(loss)) + reverse-rank(count); priorities are the
    normalized mu-th powers plus the floor offset nu, so they sum to
    1 + len * nu.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 < nu < 1.0:
        raise ValueError("nu must lie in (0, 1)")
    losses = np.asarray(losses, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if losses.shape != counts.shape:
        raise ValueError("losses and counts must have equal length")
    loss_rank = _rank_ascending(_rank_ascending(losses))
    count_rank_rev = len(counts) + 1.0 - _rank_ascending(counts)
    score = (loss_rank + count_rank_rev) ** mu
    return score / score.sum() + nu


class ReplayBuffer:
    """FIFO buffer of experiences with bounded capacity."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.records: list[Experience] = []
        self._next_uid = 0

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: Experience):
        record.uid = self._next_uid
        self._next_uid += 1
        self.records.append(record)
        if len(self.records) > self.capacity:
            self.records.pop(0)

    def refresh_priorities(self, rule: str = "ranked", mu: float = 1.0, nu: float = 0.01):
        if not self.records:
            return
        losses = np.array([r.loss for r in self.records])
        if rule == "ranked":
            counts = np.array([r.n for r in self.records])
            prs = priority_ranked(losses, counts, mu, nu)
        elif rule == "simple":
            prs = priority_simple(losses)
        else:
            raise ValueError(f"unknown priority rule {rule!r}")
        for r, pr in zip(self.records, prs):
            r.pr = float(pr)


def fill_extraction_pool(
    buffer: ReplayBuffer,
    size: int,
    rng: np.random.Generator,
    prioritized: bool = True,
) -> list[Experience]:
    """Draw records without replacement, priority-proportional.

    Every stored record must already carry a computed loss.  Selected
    records get their extraction counter bumped.  When the buffer holds no
    more than ``size`` records the pool is the whole buffer.
    """
    if len(buffer) == 0:
        raise ValueError("cannot fill a pool from an empty buffer")
    for r in buffer.records:
        if r.loss is None or not np.isfinite(r.loss):
            raise ValueError("all records need a finite stored loss before pooling")
    n = len(buffer)
    take = min(size, n)
    if prioritized:
        weights = np.array([r.pr for r in buffer.records], dtype=float)
        if weights.sum() <= 0:
            weights = np.full(n, 1.0 / n)
        probs = weights / weights.sum()
        idx = rng.choice(n, size=take, replace=False, p=probs)
    else:
        idx = rng.choice(n, size=take, replace=False)
    pool = [buffer.records[i] for i in idx]
    for r in pool:
        r.n += 1
    return pool
