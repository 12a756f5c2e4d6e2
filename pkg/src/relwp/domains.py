"""Finite value domains.

Every carrier in this package (values, states, exceptions, channels) is a
named finite domain; a value is just an index into one.  Keeping domains
first-class lets program trees store total continuation tables and lets the
checkers enumerate everything they quantify over.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple


@dataclass(frozen=True)
class FiniteDomain:
    name: str
    size: int
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"domain {self.name!r} must be inhabited, got size {self.size}")
        if self.labels is not None and len(self.labels) != self.size:
            raise ValueError(f"domain {self.name!r}: {len(self.labels)} labels for size {self.size}")

    def value(self, index: int) -> "Value":
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range for domain {self.name!r} (size {self.size})")
        return Value(self, index)

    def values(self) -> Iterator["Value"]:
        for i in range(self.size):
            yield Value(self, i)

    def label_of(self, index: int) -> str:
        if self.labels is not None:
            return self.labels[index]
        return str(index)

    def __repr__(self):
        return f"FiniteDomain({self.name!r}, {self.size})"


@dataclass(frozen=True)
class Value:
    domain: FiniteDomain
    index: int

    def __repr__(self):
        return f"<{self.domain.name}:{self.domain.label_of(self.index)}>"


UNIT = FiniteDomain("unit", 1, ("()",))
BOOL = FiniteDomain("bool", 2, ("false", "true"))

UNIT_VAL = Value(UNIT, 0)
FALSE = Value(BOOL, 0)
TRUE = Value(BOOL, 1)


def boolv(b: bool) -> Value:
    return TRUE if b else FALSE


def domain(name: str, size: int, labels: Optional[Tuple[str, ...]] = None) -> FiniteDomain:
    return FiniteDomain(name, size, labels)


def product_domain(d1: FiniteDomain, d2: FiniteDomain) -> FiniteDomain:
    """Domain of pairs, indexed row-major: (i, j) |-> i * |d2| + j."""
    labels = tuple(
        f"({d1.label_of(i)},{d2.label_of(j)})" for i in range(d1.size) for j in range(d2.size)
    )
    return FiniteDomain(f"({d1.name}*{d2.name})", d1.size * d2.size, labels)


def pair_index(d1: FiniteDomain, d2: FiniteDomain, i: int, j: int) -> int:
    return i * d2.size + j


def unpair_index(d1: FiniteDomain, d2: FiniteDomain, k: int) -> Tuple[int, int]:
    return divmod(k, d2.size)


def sum_domain(d1: FiniteDomain, d2: FiniteDomain) -> FiniteDomain:
    """Domain of tagged alternatives; left injections first."""
    labels = tuple(f"inl {d1.label_of(i)}" for i in range(d1.size)) + tuple(
        f"inr {d2.label_of(j)}" for j in range(d2.size)
    )
    return FiniteDomain(f"({d1.name}+{d2.name})", d1.size + d2.size, labels)


def inl_index(d1: FiniteDomain, d2: FiniteDomain, i: int) -> int:
    return i


def inr_index(d1: FiniteDomain, d2: FiniteDomain, j: int) -> int:
    return d1.size + j


def case_index(d1: FiniteDomain, d2: FiniteDomain, k: int) -> Tuple[bool, int]:
    """Returns (is_left, index within the summand)."""
    if k < d1.size:
        return True, k
    return False, k - d1.size
