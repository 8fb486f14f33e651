from __future__ import annotations

import pickle

import pytest
from hypothesis import given, settings, strategies as st

from helpers import exprs, non_values, small_vals
from nicheck.lang.syntax import (
    ANON, AlreadyValue, App, BinOp, Frame, Hole, IntV, Lit, LocV, Rec, Store, Var,
    decompose, fill, free_vars, is_value, subst, to_val,
)

ONE, TWO = Lit(IntV(1)), Lit(IntV(2))


def test_subst_identity_case():
    assert subst(Var("h"), "h", IntV(3)) == Lit(IntV(3))


def test_subst_stops_at_binder():
    e = Rec(ANON, "h", Var("h"))
    assert subst(e, "h", IntV(3)) == e


def test_subst_structural():
    assert subst(Store(Var("out"), Var("h")), "h", IntV(7)) == Store(Var("out"), Lit(IntV(7)))


def test_subst_recursive_name_shadows():
    e = Rec("f", "x", App(Var("f"), Var("y")))
    assert subst(e, "f", IntV(0)) == e
    assert subst(e, "y", IntV(0)) == Rec("f", "x", App(Var("f"), Lit(IntV(0))))


def test_decompose_rightmost_first():
    loc = Lit(LocV(0))
    e = Store(loc, BinOp("+", ONE, ONE))
    ctx, r = decompose(e)
    assert r == BinOp("+", ONE, ONE)
    assert ctx == (Frame(Store(loc, Hole()), "val"),)


def test_decompose_value():
    with pytest.raises(AlreadyValue):
        decompose(Lit(IntV(5)))


def test_decompose_beta_at_top():
    e = App(Lit(to_val(Rec("f", "x", Var("x")))), TWO)
    assert decompose(e) == ((), e)


def test_argument_before_function():
    e = App(App(Var("g"), ONE), BinOp("+", ONE, TWO))
    ctx, r = decompose(e)
    assert r == BinOp("+", ONE, TWO)


def test_unevaluated_rec_is_its_own_redex():
    e = App(Rec(ANON, "x", Var("x")), ONE)
    assert decompose(e)[1] == Rec(ANON, "x", Var("x"))


def test_to_val():
    assert to_val(Rec(ANON, "x", Var("y"))) is None
    assert to_val(Rec(ANON, "x", Var("x"))) is not None


def test_equality_ignores_spans_and_hash_is_consistent():
    from nicheck.lang.syntax import Span
    a, b = Var("x", span=Span(1, 1)), Var("x", span=Span(4, 2))
    assert a == b and hash(a) == hash(b)


def test_pickle_drops_caches():
    e = App(Var("f"), Var("x"))
    free_vars(e)
    hash(e)
    again = pickle.loads(pickle.dumps(e))
    assert again == e and free_vars(again) == {"f", "x"}


@settings(max_examples=300, deadline=None)
@given(non_values)
def test_fill_decompose_inverse(e):
    ctx, r = decompose(e)
    assert fill(ctx, r) == e
    assert not is_value(r)


@settings(max_examples=300, deadline=None)
@given(non_values, st.sampled_from(["x", "y", "f"]), small_vals)
def test_subst_commutes_with_fill(e, x, v):
    ctx, r = decompose(e)
    plugged = tuple(Frame(subst(fr.node, x, v), fr.hole) for fr in ctx)
    assert subst(e, x, v) == fill(plugged, subst(r, x, v))


@settings(max_examples=300, deadline=None)
@given(exprs, st.sampled_from(["x", "y", "f"]), small_vals, st.sampled_from(["x", "y", "f", ANON]))
def test_subst_shadowing(body, x, v, other):
    bound = Rec(other, x, body)
    assert subst(bound, x, v) == bound
    assert x not in free_vars(subst(body, x, v))
