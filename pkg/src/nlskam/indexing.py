"""Multi-indices over a truncated set of Fourier modes.

A multi-index is a finitely supported map ``mode -> positive int``.  It is
stored as a sorted tuple of ``(mode, count)`` pairs so that it is hashable
and has a canonical text form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np


@dataclass(frozen=True)
class ModeSet:
    """All integer modes ``j`` with ``|j| <= j_max``.

    ``tangential`` optionally marks the modes carrying nonzero actions in the
    lower-dimensional setting; ``None`` means every mode is tangential.
    """

    j_max: int
    tangential: frozenset[int] | None = None

    def __post_init__(self):
        if self.j_max < 0:
            raise ValueError("j_max must be nonnegative")
        if self.tangential is not None:
            tang = frozenset(int(j) for j in self.tangential)
            bad = [j for j in tang if abs(j) > self.j_max]
            if bad:
                raise ValueError(f"tangential modes {sorted(bad)} outside |j| <= {self.j_max}")
            object.__setattr__(self, "tangential", tang)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(range(-self.j_max, self.j_max + 1))

    @property
    def n(self) -> int:
        return 2 * self.j_max + 1

    def index(self, j: int) -> int:
        if abs(j) > self.j_max:
            raise KeyError(f"mode {j} outside |j| <= {self.j_max}")
        return j + self.j_max

    def mode_array(self) -> np.ndarray:
        return np.arange(-self.j_max, self.j_max + 1)

    def tangential_mask(self) -> np.ndarray:
        if self.tangential is None:
            return np.ones(self.n, dtype=bool)
        return np.array([j in self.tangential for j in self.modes])

    def full(self) -> "ModeSet":
        """Same modes, every one tangential."""
        return ModeSet(self.j_max)

    def __contains__(self, j) -> bool:
        return isinstance(j, (int, np.integer)) and abs(int(j)) <= self.j_max


class MultiIndex(Mapping[int, int]):
    """Immutable map ``mode -> exponent`` with zero entries omitted."""

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict[int, int] = {}
        for j, c in items:
            c = int(c)
            if c < 0:
                raise ValueError(f"negative exponent {c} at mode {j}")
            if c:
                acc[int(j)] = acc.get(int(j), 0) + c
        self._items = tuple(sorted(acc.items()))
        self._hash = hash(self._items)

    def __getitem__(self, j):
        for k, c in self._items:
            if k == j:
                return c
        raise KeyError(j)

    def get(self, j, default=0):
        for k, c in self._items:
            if k == j:
                return c
        return default

    def __iter__(self) -> Iterator[int]:
        return (k for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, MultiIndex):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self == MultiIndex(other)
        return NotImplemented

    def __repr__(self):
        return f"MultiIndex({dict(self._items)})"

    def __str__(self):
        return to_text(self)

    def __add__(self, other: Mapping[int, int]) -> "MultiIndex":
        return MultiIndex(list(self.items()) + list(other.items()))

    def __sub__(self, other: Mapping[int, int]) -> "MultiIndex":
        out = dict(self._items)
        for j, c in other.items():
            v = out.get(j, 0) - c
            if v < 0:
                raise ValueError(f"subtraction gives negative exponent at mode {j}")
            out[j] = v
        return MultiIndex(out)

    def dominates(self, other: Mapping[int, int]) -> bool:
        """Componentwise ``self >= other``."""
        return all(self.get(j) >= c for j, c in other.items())

    def to_array(self, modes: ModeSet) -> np.ndarray:
        out = np.zeros(modes.n, dtype=np.int64)
        for j, c in self._items:
            out[modes.index(j)] = c
        return out

    @classmethod
    def from_array(cls, arr, modes: ModeSet) -> "MultiIndex":
        return cls((j, int(c)) for j, c in zip(modes.modes, arr) if c)

    @classmethod
    def unit(cls, j: int, count: int = 1) -> "MultiIndex":
        return cls({j: count})


def mass(alpha: Mapping[int, int]) -> int:
    return sum(alpha.values())


def momentum(alpha: Mapping[int, int]) -> int:
    return sum(j * c for j, c in alpha.items())


def split_min(alpha: Mapping[int, int], beta: Mapping[int, int]):
    """Write ``(alpha, beta)`` as ``(m + a, m + b)`` with ``a``, ``b`` of disjoint support."""
    alpha, beta = MultiIndex(alpha), MultiIndex(beta)
    m = MultiIndex({j: min(c, beta.get(j)) for j, c in alpha.items()})
    return m, alpha - m, beta - m


def merge(m: Mapping[int, int], a: Mapping[int, int], b: Mapping[int, int]):
    """Inverse of :func:`split_min`."""
    a, b = MultiIndex(a), MultiIndex(b)
    overlap = set(a) & set(b)
    if overlap:
        raise ValueError(f"a and b share support on modes {sorted(overlap)}")
    m = MultiIndex(m)
    return m + a, m + b


def to_text(alpha: Mapping[int, int]) -> str:
    return ",".join(f"{j}:{c}" for j, c in sorted(alpha.items()) if c)


def from_text(text: str) -> MultiIndex:
    text = text.strip()
    if not text:
        return MultiIndex()
    pairs = []
    for chunk in text.split(","):
        j, c = chunk.split(":")
        pairs.append((int(j), int(c)))
    return MultiIndex(pairs)


def multi_indices(modes: Iterable[int], total: int) -> Iterator[MultiIndex]:
    """All multi-indices of the given mass supported on ``modes``."""
    modes = sorted(modes)

    def rec(pos, left):
        if left == 0:
            yield ()
            return
        if pos == len(modes):
            return
        for c in range(left, -1, -1):
            for rest in rec(pos + 1, left - c):
                yield ((modes[pos], c),) + rest if c else rest

    for items in rec(0, total):
        yield MultiIndex(items)
