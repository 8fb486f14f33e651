"""Shared strategies and reference oracles for the test suite."""
from __future__ import annotations

import functools
from collections import defaultdict

from hypothesis import strategies as st

from nicheck import sectypes as T
from nicheck.lang.syntax import (
    ANON, App, BinOp, BoolV, CAS, FAA, Fork, Fst, If, InjL, InjR, IntV, Lit, Load, LocV,
    Match, Pair, Rec, Ref, Snd, Store, UNIT, Var,
)
from nicheck.semantics import Heap

NAMES = ("x", "y", "f")

# --------------------------------------------------------------------------
# Expressions and heaps
# --------------------------------------------------------------------------

small_vals = st.one_of(
    st.integers(-3, 3).map(IntV),
    st.booleans().map(BoolV),
    st.just(UNIT),
    st.integers(0, 3).map(LocV),
)
leaves = st.one_of(small_vals.map(Lit), st.sampled_from(NAMES).map(Var))
names = st.sampled_from(NAMES + (ANON,))


def _extend(sub):
    return st.one_of(
        st.builds(App, sub, sub),
        st.builds(BinOp, st.sampled_from(("+", "-", "=", "<")), sub, sub),
        st.builds(If, sub, sub, sub),
        st.builds(Pair, sub, sub),
        st.builds(Fst, sub),
        st.builds(Snd, sub),
        st.builds(InjL, sub),
        st.builds(InjR, sub),
        st.builds(Match, sub, names, sub, names, sub),
        st.builds(Rec, names, names, sub),
        st.builds(Fork, sub),
        st.builds(Ref, sub),
        st.builds(Load, sub),
        st.builds(Store, sub, sub),
        st.builds(CAS, sub, sub, sub),
        st.builds(FAA, sub, sub),
    )


exprs = st.recursive(leaves, _extend, max_leaves=12)
non_values = exprs.filter(lambda e: type(e) is not Lit)

heaps = st.dictionaries(st.integers(0, 5), small_vals, max_size=6).map(Heap)


# --------------------------------------------------------------------------
# Type algebra oracle
# --------------------------------------------------------------------------


def skeleton(t):
    """The type with labels erased."""
    if isinstance(t, T.ProdT):
        return ("*", skeleton(t.left), skeleton(t.right))
    if isinstance(t, T.RefT):
        return ("ref", skeleton(t.content))
    if isinstance(t, T.ArrowT):
        return ("->", skeleton(t.arg), skeleton(t.res))
    return type(t).__name__


class Universe:
    """All types up to a depth, with the declarative subtype relation.

    Built from the one-step rules (base labels, covariant products,
    invariant references, contra/co-variant arrows) over component
    relations, closed under reflexivity and transitivity by Warshall's
    algorithm.  Relations are bitsets within a label-erasure class.
    """

    def __init__(self, depth: int):
        self.types = list(dict.fromkeys(T.all_types(depth)))
        self.groups: dict[object, list] = defaultdict(list)
        for t in self.types:
            self.groups[skeleton(t)].append(t)
        self.index = {t: i for g in self.groups.values() for i, t in enumerate(g)}
        self.up: dict[object, int] = {}
        order = sorted(self.groups, key=lambda k: T.type_size(self.groups[k][0]))
        for key in order:
            self._close(self.groups[key])

    def leq(self, a, b) -> bool:
        if skeleton(a) != skeleton(b):
            return False
        return bool(self.up[a] >> self.index[b] & 1)

    def _step(self, a, b) -> bool:
        if isinstance(a, T.UnitT):
            return True
        if isinstance(a, (T.IntT, T.BoolT)):
            return a.label <= b.label
        if isinstance(a, T.ProdT):
            return self.leq(a.left, b.left) and self.leq(a.right, b.right)
        if isinstance(a, T.RefT):
            return self.leq(a.content, b.content) and self.leq(b.content, a.content)
        return (a.label <= b.label and self.leq(b.arg, a.arg) and self.leq(a.res, b.res))

    def _close(self, group: list) -> None:
        n = len(group)
        rows = []
        for i, a in enumerate(group):
            row = 1 << i
            for j, b in enumerate(group):
                if self._step(a, b):
                    row |= 1 << j
            rows.append(row)
        for k in range(n):
            bit = 1 << k
            for i in range(n):
                if rows[i] & bit:
                    rows[i] |= rows[k]
        for t, row in zip(group, rows):
            self.up[t] = row

    def least(self, common: int, group: list):
        """The member of ``common`` below every other member, if any."""
        for j, t in enumerate(group):
            if common >> j & 1 and common & ~self.up[t] == 0:
                return t
        return None


@functools.lru_cache(maxsize=None)
def universe(depth: int) -> Universe:
    return Universe(depth)


@functools.lru_cache(maxsize=None)
def check_type_algebra(depth: int = 3) -> dict[str, int]:
    """Exhaustive checks; returns counts of cases checked per property.

    Raises AssertionError on the first failure.
    """
    U = universe(depth)
    counts = defaultdict(int)
    for t in U.types:
        assert T.subtype(t, t), f"reflexivity: {t}"
        counts["reflexivity"] += 1
        assert T.stamp(t, T.L) == t, f"stamp L: {t}"
        for xi in T.Label:
            s = T.stamp(t, xi)
            assert T.stamp(s, xi) == s, f"stamp idempotence: {t} {xi}"
            assert T.subtype(t, s), f"subtype to stamp: {t} {xi}"
            counts["stamp"] += 1
    for key, group in U.groups.items():
        # subtype agrees with the declarative relation on every pair
        actual = []
        for a in group:
            row = 0
            for j, b in enumerate(group):
                if T.subtype(a, b):
                    row |= 1 << j
            assert row == U.up[a], f"subtype disagrees with oracle at {a}"
            actual.append(row)
            counts["subtype_pairs"] += len(group)
        # transitivity of the computed relation
        for i, a in enumerate(group):
            for j, b in enumerate(group):
                if actual[i] >> j & 1:
                    assert actual[j] & ~actual[i] == 0, f"transitivity: {a} <: {b}"
                    counts["transitivity"] += 1
        # joins and meets are least upper / greatest lower bounds
        down = [0] * len(group)
        for i in range(len(group)):
            for j in range(len(group)):
                if actual[i] >> j & 1:
                    down[j] |= 1 << i
        for i, a in enumerate(group):
            for j in range(i, len(group)):
                b = group[j]
                common_up = actual[i] & actual[j]
                expected = U.least(common_up, group)
                try:
                    got = T.join_type(a, b)
                except T.NoJoin:
                    got = None
                assert got == expected, f"join {a}, {b}: {got} vs {expected}"
                assert got == _try(T.join_type, b, a), f"join symmetry {a}, {b}"
                common_down = down[i] & down[j]
                greatest = None
                for k, c in enumerate(group):
                    if common_down >> k & 1 and common_down & ~down[k] == 0:
                        greatest = c
                        break
                assert _try(T.meet_type, a, b) == greatest, f"meet {a}, {b}"
                counts["join_pairs"] += 1
    # types of different shapes never have bounds: one pair of
    # representatives (all-L and all-H labels) per pair of shapes
    reps = [(g[0], g[-1]) for g in U.groups.values()]
    for i, (a_lo, a_hi) in enumerate(reps):
        for b_lo, b_hi in reps[i + 1:]:
            for a, b in ((a_lo, b_lo), (a_hi, b_hi)):
                assert _try(T.join_type, a, b) is None, f"join across shapes {a}, {b}"
                assert not T.subtype(a, b) and not T.subtype(b, a)
                counts["cross_shape"] += 1
    return dict(counts)


def _try(fn, a, b):
    try:
        return fn(a, b)
    except T.NoJoin:
        return None
