from __future__ import annotations

import pytest

from nicheck import sectypes as T
from nicheck.corpus import fixtures
from nicheck.lang import parser as P
from nicheck.lang.parser import ParseError, parse, parse_expr, parse_type
from nicheck.lang.pretty import pretty, pretty_program
from nicheck.lang.syntax import (
    ANON, App, BinOp, BoolV, Fork, Fst, If, IntV, Lit, Load, Pair, Rec, Ref, Snd, Store,
    UNIT, Var,
)


def test_output_store():
    p = parse("output out; out <- 1")
    assert p.outputs == ["out"]
    assert p.main == Store(Var("out"), Lit(IntV(1)))


def test_let_desugars_to_application():
    e = parse_expr("let x = ref true in !x")
    assert e == App(Rec(ANON, "x", Load(Var("x"))), Ref(Lit(BoolV(True))))


def test_high_and_fork():
    p = parse("high h : {0,1}; fork { h }")
    assert p.highs == [("h", (0, 1))]
    assert p.main == Fork(Var("h"))


def test_range_domain():
    assert parse("high x : {0..3}; x").highs == [("x", (0, 1, 2, 3))]


def test_sequence_is_anonymous_let():
    assert parse_expr("1; 2") == App(Rec(ANON, ANON, Lit(IntV(2))), Lit(IntV(1)))


def test_precedence():
    e = parse_expr("1 + 2 * 3 = 7")
    assert e == BinOp("=", BinOp("+", Lit(IntV(1)), BinOp("*", Lit(IntV(2)), Lit(IntV(3)))),
                      Lit(IntV(7)))


def test_application_is_left_associative():
    e = parse_expr("fun f => fun x => f x x")
    body = e.body.body
    assert body == App(App(Var("f"), Var("x")), Var("x"))


def test_not_and_negative_literal():
    assert parse_expr("not true") == If(Lit(BoolV(True)), Lit(BoolV(False)), Lit(BoolV(True)))
    assert parse_expr("-3") == Lit(IntV(-3))


def test_unit_argument_binds_anonymously():
    e = parse_expr("fun () => 1")
    assert e == Rec(ANON, ANON, Lit(IntV(1)))
    assert e.arg_ty == T.UnitT()


def test_annotations_are_metadata():
    e = parse_expr("rec f (x: int^H) : bool^L @ H => f x")
    assert e.arg_ty == T.IntT(T.H) and e.ret_ty == T.BoolT(T.L) and e.label is T.H
    assert e == Rec("f", "x", App(Var("f"), Var("x")))


def test_records_become_pairs():
    e = parse_expr("let r = { a = 1; b = 2; c = 3 } in r.b")
    assert e.arg == Pair(Lit(IntV(1)), Pair(Lit(IntV(2)), Lit(IntV(3))))
    assert e.fn.body == Fst(Snd(Var("r")))


def test_types():
    assert parse_type("(int^H -> bool^L)^L") == T.ArrowT(T.IntT(T.H), T.BoolT(T.L), T.L)
    assert parse_type("ref int^L * unit") == T.ProdT(T.RefT(T.IntT(T.L)), T.UnitT())
    assert parse_type("int^H -> unit") == T.ArrowT(T.IntT(T.H), T.UnitT(), T.L)


def test_comments_and_spans():
    p = parse("// header\noutput o;\nmain = o <- 1;")
    assert p.main.span.line == 3


@pytest.mark.parametrize("text, line, col", [
    ("let x = in x", 1, 9),
    ("output o;\nmain = o <-", 2, 12),
    ("fun x => y", 1, 10),
])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert (info.value.line, info.value.col) == (line, col)


def test_parse_error_lists_expected_tokens():
    with pytest.raises(ParseError) as info:
        parse("if true then 1")
    assert "else" in info.value.expected


def test_duplicate_output_rejected():
    with pytest.raises(ParseError):
        parse("output o; output o; o <- 1")


@pytest.mark.parametrize("f", fixtures(), ids=lambda f: f.name)
def test_round_trip_corpus(f):
    p = f.program
    again = parse(pretty_program(p))
    assert again == p
    assert pretty_program(again) == pretty_program(p)


def test_round_trip_expression_sugar():
    for src in ["let x = 1 in x + 1", "(1, 2); fst (3, 4)", "if true then 1 else 2",
                "match inl 1 with inl a => a | inr b => 0 end",
                "cas(ref 0, 0, 1)", "faa(ref 1, 2)", "(fun (x: int^L) => x : (int^L -> int^L)^L)"]:
        e = parse_expr(src)
        assert parse_expr(pretty(e)) == e, src


def test_tokenizer_positions():
    toks = P.tokenize("a <-\n  1")
    assert [(t.text, t.line, t.col) for t in toks[:3]] == [("a", 1, 1), ("<-", 1, 3), ("1", 2, 3)]


def test_unit_literal():
    assert parse_expr("()") == Lit(UNIT)
