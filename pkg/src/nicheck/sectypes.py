"""Sensitivity labels and security types.

The type grammar is ``unit | int^l | bool^l | t * t | ref t | (t -> t)^l``
over the two-point lattice L below H.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional, Union


class Label(enum.IntEnum):
    L = 0
    H = 1

    def __str__(self) -> str:
        return self.name

    def join(self, other: "Label") -> "Label":
        return max(self, other)

    def meet(self, other: "Label") -> "Label":
        return min(self, other)

    def flows_to(self, other: "Label") -> bool:
        return self <= other


L, H = Label.L, Label.H


@dataclass(frozen=True)
class UnitT:
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class IntT:
    label: Label

    def __str__(self) -> str:
        return f"int^{self.label}"


@dataclass(frozen=True)
class BoolT:
    label: Label

    def __str__(self) -> str:
        return f"bool^{self.label}"


@dataclass(frozen=True)
class ProdT:
    left: "SecType"
    right: "SecType"

    def __str__(self) -> str:
        left = f"({self.left})" if isinstance(self.left, ProdT) else str(self.left)
        return f"{left} * {self.right}"


@dataclass(frozen=True)
class RefT:
    content: "SecType"

    def __str__(self) -> str:
        inner = f"({self.content})" if isinstance(self.content, ProdT) else str(self.content)
        return f"ref {inner}"


@dataclass(frozen=True)
class ArrowT:
    arg: "SecType"
    res: "SecType"
    label: Label

    def __str__(self) -> str:
        return f"({self.arg} -> {self.res})^{self.label}"


SecType = Union[UnitT, IntT, BoolT, ProdT, RefT, ArrowT]


class NoJoin(Exception):
    """Two types have no least upper (or greatest lower) bound."""


def subtype(t1: SecType, t2: SecType) -> bool:
    """Decide ``t1 <: t2``; transitivity is admissible in this syntax-directed form."""
    if isinstance(t1, UnitT):
        return isinstance(t2, UnitT)
    if isinstance(t1, IntT):
        return isinstance(t2, IntT) and t1.label <= t2.label
    if isinstance(t1, BoolT):
        return isinstance(t2, BoolT) and t1.label <= t2.label
    if isinstance(t1, ProdT):
        return (isinstance(t2, ProdT) and subtype(t1.left, t2.left)
                and subtype(t1.right, t2.right))
    if isinstance(t1, RefT):
        return t1 == t2
    if isinstance(t1, ArrowT):
        return (isinstance(t2, ArrowT) and t1.label <= t2.label
                and subtype(t2.arg, t1.arg) and subtype(t1.res, t2.res))
    raise TypeError(f"not a security type: {t1!r}")


def stamp(t: SecType, xi: Label) -> SecType:
    """Level stamping ``t ⊔ xi``: raise the outer label(s), leave references alone."""
    if isinstance(t, IntT):
        return IntT(t.label.join(xi))
    if isinstance(t, BoolT):
        return BoolT(t.label.join(xi))
    if isinstance(t, ArrowT):
        return ArrowT(t.arg, t.res, t.label.join(xi))
    if isinstance(t, ProdT):
        return ProdT(stamp(t.left, xi), stamp(t.right, xi))
    return t


def is_flat(t: SecType) -> bool:
    if isinstance(t, UnitT):
        return True
    if isinstance(t, (IntT, BoolT)):
        return t.label is H
    if isinstance(t, ProdT):
        return is_flat(t.left) and is_flat(t.right)
    return False


def join_type(t1: SecType, t2: SecType) -> SecType:
    """Least upper bound under ``<:``; raises ``NoJoin`` when there is none."""
    return _bound(t1, t2, upper=True)


def meet_type(t1: SecType, t2: SecType) -> SecType:
    """Greatest lower bound under ``<:``; raises ``NoJoin`` when there is none."""
    return _bound(t1, t2, upper=False)


def _bound(t1: SecType, t2: SecType, upper: bool) -> SecType:
    lab = Label.join if upper else Label.meet
    if isinstance(t1, UnitT) and isinstance(t2, UnitT):
        return t1
    if isinstance(t1, IntT) and isinstance(t2, IntT):
        return IntT(lab(t1.label, t2.label))
    if isinstance(t1, BoolT) and isinstance(t2, BoolT):
        return BoolT(lab(t1.label, t2.label))
    if isinstance(t1, ProdT) and isinstance(t2, ProdT):
        return ProdT(_bound(t1.left, t2.left, upper), _bound(t1.right, t2.right, upper))
    if isinstance(t1, RefT) and isinstance(t2, RefT) and t1 == t2:
        return t1
    if isinstance(t1, ArrowT) and isinstance(t2, ArrowT):
        return ArrowT(_bound(t1.arg, t2.arg, not upper),
                      _bound(t1.res, t2.res, upper),
                      lab(t1.label, t2.label))
    raise NoJoin(f"{t1} and {t2}")


def all_types(depth: int) -> Iterator[SecType]:
    """Every security type whose constructor nesting is at most ``depth``."""
    if depth <= 0:
        return
    yield UnitT()
    for lbl in Label:
        yield IntT(lbl)
        yield BoolT(lbl)
    smaller = list(all_types(depth - 1))
    for t in smaller:
        yield RefT(t)
    for a in smaller:
        for b in smaller:
            yield ProdT(a, b)
            for lbl in Label:
                yield ArrowT(a, b, lbl)


def type_size(t: SecType) -> int:
    if isinstance(t, (ProdT,)):
        return 1 + type_size(t.left) + type_size(t.right)
    if isinstance(t, RefT):
        return 1 + type_size(t.content)
    if isinstance(t, ArrowT):
        return 1 + type_size(t.arg) + type_size(t.res)
    return 1


def first_mismatch(actual: SecType, expected: SecType) -> Optional[str]:
    """Classify why ``actual <: expected`` fails.

    Returns ``"LabelLeak"`` when the shapes agree and only a label is too high,
    ``"RefMismatch"`` when reference contents differ, ``"ShapeMismatch"``
    otherwise, and ``None`` when the subtyping holds.
    """
    return _mismatch(actual, expected, positive=True)


def _mismatch(a: SecType, e: SecType, positive: bool) -> Optional[str]:
    if isinstance(a, RefT) and isinstance(e, RefT):
        return None if a == e else "RefMismatch"
    if type(a) is not type(e):
        return "ShapeMismatch"
    if isinstance(a, UnitT):
        return None
    if isinstance(a, (IntT, BoolT)):
        return None if a.label <= e.label else "LabelLeak"
    if isinstance(a, ProdT):
        return _mismatch(a.left, e.left, positive) or _mismatch(a.right, e.right, positive)
    if isinstance(a, ArrowT):
        if not a.label <= e.label:
            return "LabelLeak"
        return _mismatch(e.arg, a.arg, not positive) or _mismatch(a.res, e.res, positive)
    return "ShapeMismatch"
