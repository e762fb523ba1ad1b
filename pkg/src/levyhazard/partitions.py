"""Set partitions of {0, ..., n-1}, EPPF evaluation, and Chinese-restaurant
prediction rules derived from an EPPF.

Cells are kept in canonical order-of-appearance form: each cell is sorted
ascending and cells are ordered by their smallest element.  Partition
probabilities that depend only on cell sizes (EPPFs) are insensitive to
the labeling, so the canonical form is a free choice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from math import lgamma
from typing import Callable, Iterable, Iterator, Literal, Sequence

import numpy as np

from .exceptions import EnumerationCapError

DEFAULT_ENUMERATION_CAP = 10

NEW = "new"


@dataclass(frozen=True)
class Partition:
    """A set partition of {0, ..., n-1} in canonical form."""

    cells: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        count = 0
        top = -1
        prev_min = -1
        for cell in self.cells:
            if len(cell) == 0:
                raise ValueError("empty cell")
            if cell[0] <= prev_min:
                raise ValueError("cells are not in order of appearance")
            prev_min = cell[0]
            prev = -1
            for i in cell:
                if i <= prev:
                    raise ValueError(f"cell {cell} is not sorted")
                prev = i
                seen.add(i)
                count += 1
                if i > top:
                    top = i
        if count and (len(seen) != count or top != count - 1 or min(seen) != 0):
            raise ValueError(f"indices are not exactly 0..{count - 1}")

    @classmethod
    def from_cells(cls, cells: Iterable[Iterable[int]]) -> "Partition":
        canon = tuple(sorted((tuple(sorted(c)) for c in cells), key=lambda c: c[0]))
        return cls(canon)

    @classmethod
    def from_values(cls, values: Sequence) -> "Partition":
        """Partition induced by exact ties among ``values``."""
        cells: dict = {}
        for i, v in enumerate(values):
            cells.setdefault(v, []).append(i)
        return cls.from_cells(cells.values())

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.cells)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.cells)

    def grow(self, target: int | Literal["new"]) -> "Partition":
        """Append index n to cell ``target`` (0-based) or as a new singleton."""
        n = self.n
        if target == NEW:
            return Partition(self.cells + ((n,),))
        j = int(target)
        if not 0 <= j < self.num_cells:
            raise IndexError(f"cell index {j} out of range for {self.num_cells} cells")
        new_cells = list(self.cells)
        new_cells[j] = new_cells[j] + (n,)
        return Partition(tuple(new_cells))

    def to_json(self) -> str:
        return json.dumps([list(c) for c in self.cells])

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        return cls.from_cells(json.loads(text))

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self.cells)


def enumerate_partitions(n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Partition]:
    """Yield every set partition of {0, ..., n-1} exactly once, canonically.

    Refuses n beyond ``cap``: the count is the n-th Bell number and grows
    faster than exponentially.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > cap:
        raise EnumerationCapError(
            f"n={n} exceeds the enumeration cap {cap}; raise the cap explicitly if intended"
        )
    yield from _extend([(0,)], 1, n)


def _extend(cells: list[tuple[int, ...]], i: int, n: int) -> Iterator[Partition]:
    if i == n:
        yield Partition(tuple(cells))
        return
    for j in range(len(cells)):
        yield from _extend(cells[:j] + [cells[j] + (i,)] + cells[j + 1:], i + 1, n)
    yield from _extend(cells + [(i,)], i + 1, n)


def esf_log_prob(p: Partition, theta: float) -> float:
    """log probability of ``p`` under the Ewens sampling formula with total
    mass ``theta``: theta^{n(p)} Gamma(theta)/Gamma(theta+n) prod_j Gamma(e_j)."""
    if theta <= 0:
        raise ValueError("theta must be > 0")
    n = p.n
    out = p.num_cells * math.log(theta) + lgamma(theta) - lgamma(theta + n)
    for cell in p.cells:
        out += lgamma(len(cell))
    return out


def esf_eppf(theta: float) -> Callable[[Partition], float]:
    """The ESF as a plain partition-probability callable."""
    return lambda p: math.exp(esf_log_prob(p, theta))


def crp_predictives(eppf: Callable[[Partition], float], p: Partition) -> tuple[float, np.ndarray]:
    """Prediction-rule probabilities derived from an EPPF.

    Returns (q0, q) where q0 is the probability that element n starts a
    new cell and q[j] the probability that it joins cell j, both computed
    as ratios eppf(grown)/eppf(p).
    """
    base = eppf(p)
    if not base > 0:
        raise ValueError("eppf(p) must be positive to condition on p")
    q0 = eppf(p.grow(NEW)) / base
    q = np.array([eppf(p.grow(j)) for j in range(p.num_cells)]) / base
    return float(q0), q
