"""Finitely supported sequences on the integer lattice.

A :class:`LatticeSeq` stores only its non-zero entries, so every value lives in
``l_0`` and has a finite exceedance set.  The helpers below implement the
shift operator, exceedance sets, anchoring functions and the two bijective
exceedance-maps used throughout the package.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "LatticeSeq",
    "EmptyExceedanceSet",
    "ZeroSequence",
    "NotInE0",
    "shift",
    "exceedance_set",
    "sup_norm",
    "anchor_first_exceedance",
    "anchor_first_maximum",
    "tau_cyclic",
    "tau_nearest",
    "associated_map",
    "exceedance_shift",
    "canonicalize_mod_shift",
    "ANCHORS",
    "anchor_dense",
]


class EmptyExceedanceSet(ValueError):
    pass


class ZeroSequence(ValueError):
    pass


class NotInE0(ValueError):
    """Raised when the origin is not an exceedance-point."""


Pairs = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


class LatticeSeq:
    """Immutable sparse real sequence indexed by the integers.

    Zero entries are dropped on construction; indices are kept sorted.

    >>> x = LatticeSeq({1: 3.0, 0: 2.0, 5: 0.0})
    >>> x
    LatticeSeq('0:2.0,1:3.0')
    >>> x[1], x[7]
    (3.0, 0.0)
    """

    __slots__ = ("_idx", "_val", "_hash")

    def __init__(self, entries: Pairs = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        merged = {}
        for i, v in items:
            i = int(i)
            if i in merged:
                raise ValueError(f"duplicate index {i}")
            merged[i] = float(v)
        keys = sorted(k for k, v in merged.items() if v != 0.0)
        for k in keys:
            if not math.isfinite(merged[k]):
                raise ValueError(f"non-finite value at index {k}")
        self._idx = tuple(keys)
        self._val = tuple(merged[k] for k in keys)
        self._hash = None

    @classmethod
    def _raw(cls, idx: Tuple[int, ...], val: Tuple[float, ...]) -> "LatticeSeq":
        # trusted constructor: sorted, unique, non-zero
        obj = cls.__new__(cls)
        obj._idx = idx
        obj._val = val
        obj._hash = None
        return obj

    @classmethod
    def from_dense(cls, values: Sequence[float], start: int = 0) -> "LatticeSeq":
        return cls((start + j, v) for j, v in enumerate(values))

    @classmethod
    def parse(cls, text: str) -> "LatticeSeq":
        """Parse the ``"index:value,index:value"`` literal."""
        text = text.strip()
        if not text:
            return cls()
        pairs = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                i, v = chunk.split(":")
                pairs.append((int(i), float(v)))
            except ValueError:
                raise ValueError(f"bad sequence entry {chunk!r}") from None
        return cls(pairs)

    @property
    def indices(self) -> Tuple[int, ...]:
        return self._idx

    @property
    def values(self) -> Tuple[float, ...]:
        return self._val

    def items(self):
        return zip(self._idx, self._val)

    def __len__(self):
        return len(self._idx)

    def __bool__(self):
        return bool(self._idx)

    def __getitem__(self, i: int) -> float:
        lo, hi = 0, len(self._idx)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._idx[mid] < i:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self._idx) and self._idx[lo] == i:
            return self._val[lo]
        return 0.0

    def __eq__(self, other):
        if not isinstance(other, LatticeSeq):
            return NotImplemented
        return self._idx == other._idx and self._val == other._val

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._idx, self._val))
        return self._hash

    def isclose(self, other: "LatticeSeq", rtol: float = 1e-12) -> bool:
        """Same support and values equal up to relative tolerance ``rtol``."""
        if self._idx != other._idx:
            return False
        return all(abs(a - b) <= rtol * max(abs(a), abs(b)) for a, b in zip(self._val, other._val))

    def shift(self, k: int) -> "LatticeSeq":
        if k == 0:
            return self
        return LatticeSeq._raw(tuple(i - k for i in self._idx), self._val)

    def scale(self, t: float) -> "LatticeSeq":
        if t == 0:
            return LatticeSeq()
        return LatticeSeq._raw(self._idx, tuple(v * t for v in self._val))

    def __mul__(self, t):
        if isinstance(t, (int, float)):
            return self.scale(float(t))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, t):
        if isinstance(t, (int, float)):
            return LatticeSeq._raw(self._idx, tuple(v / t for v in self._val))
        return NotImplemented

    def __neg__(self):
        return self.scale(-1.0)

    def alpha_mass(self, alpha: float) -> float:
        """Sum of ``|x_k|**alpha`` over the support."""
        return math.fsum(abs(v) ** alpha for v in self._val)

    def to_dense(self, lo: int, hi: int) -> np.ndarray:
        """Values at indices ``lo..hi`` inclusive as a numpy array."""
        out = np.zeros(hi - lo + 1)
        for i, v in self.items():
            if lo <= i <= hi:
                out[i - lo] = v
        return out

    def __str__(self):
        return ",".join(f"{i}:{v!r}" for i, v in self.items())

    def __repr__(self):
        return f"LatticeSeq({str(self)!r})"


def shift(x: LatticeSeq, k: int) -> LatticeSeq:
    """Move the origin to ``k``: ``shift(x, k)[i] == x[i + k]``."""
    return x.shift(k)


def exceedance_set(x: LatticeSeq) -> Tuple[int, ...]:
    """Sorted indices with ``|x_i| > 1`` (strict)."""
    return tuple(i for i, v in x.items() if abs(v) > 1.0)


def sup_norm(x: LatticeSeq) -> float:
    return max((abs(v) for v in x.values), default=0.0)


def anchor_first_exceedance(x: LatticeSeq) -> int:
    for i, v in x.items():
        if abs(v) > 1.0:
            return i
    raise EmptyExceedanceSet("sequence has no exceedance-point")


def anchor_first_maximum(x: LatticeSeq) -> int:
    if not x:
        raise ZeroSequence("first maximum undefined for the zero sequence")
    best_i, best = x.indices[0], abs(x.values[0])
    for i, v in x.items():
        if abs(v) > best:
            best_i, best = i, abs(v)
    return best_i


ANCHORS: dict = {"fe": anchor_first_exceedance, "fm": anchor_first_maximum}


def _exceedances_with_origin(x: LatticeSeq) -> Tuple[int, ...]:
    e = exceedance_set(x)
    if 0 not in e:
        raise NotInE0("origin is not an exceedance-point")
    return e


def tau_cyclic(x: LatticeSeq, n: int = 1) -> int:
    """The exceedance-point ``n`` steps after the origin, cyclically."""
    e = _exceedances_with_origin(x)
    return e[(e.index(0) + n) % len(e)]


def _nearest(e: Sequence[int], k: int) -> int:
    # smallest index wins ties since e is sorted ascending
    best, dist = k, None
    for j in e:
        if j == k:
            continue
        d = abs(j - k)
        if dist is None or d < dist:
            best, dist = j, d
    return best


def tau_nearest(x: LatticeSeq) -> int:
    """Mutual nearest-neighbour pairing of exceedance-points.

    Returns ``i`` when ``i`` is the nearest exceedance-point of the origin and
    the origin is the nearest of ``i``; otherwise 0.
    """
    e = _exceedances_with_origin(x)
    if len(e) == 1:
        return 0
    i = _nearest(e, 0)
    return i if _nearest(e, i) == 0 else 0


def associated_map(x: LatticeSeq, tau: Callable[[LatticeSeq], int], k: int) -> int:
    """``k + tau(shift(x, k))`` for an exceedance-point ``k`` of ``x``."""
    return k + tau(x.shift(k))


def exceedance_shift(x: LatticeSeq, tau: Callable[[LatticeSeq], int]) -> LatticeSeq:
    return x.shift(tau(x))


def canonicalize_mod_shift(x: LatticeSeq) -> LatticeSeq:
    """Representative of the shift-equivalence class with first maximum at 0."""
    return x.shift(anchor_first_maximum(x))


def anchor_dense(rows: np.ndarray, kind: str) -> np.ndarray:
    """Column index of the anchor for each row of a dense 2-d array.

    Rows are finite windows embedded in ``l_0`` (zeros outside).  ``kind`` is
    ``"fe"`` or ``"fm"``; rows without an exceedance get -1 under ``"fe"``.
    """
    a = np.abs(np.atleast_2d(rows))
    if kind == "fe":
        hit = a > 1.0
        first = hit.argmax(axis=1)
        return np.where(hit.any(axis=1), first, -1)
    if kind == "fm":
        return a.argmax(axis=1)
    raise ValueError(f"unknown anchor {kind!r}")
