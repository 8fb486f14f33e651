"""Printing expressions, values and programs back to concrete syntax.

``parse(pretty_program(p))`` is structurally equal to ``p`` for any parsed
program.  Compound sub-terms are parenthesised, which keeps the printer
independent of the precedence table.
"""
from __future__ import annotations

from .program import Program
from .syntax import (
    ANON, App, ArrayGet, ArrayMake, ArraySet, BinOp, BoolV, CAS, Expr, FAA, Fork, Fst,
    Hole, If, InjL, InjLV, InjR, InjRV, IntV, Lit, Load, LocV, Match, Pair, PairV, Rec,
    RecV, Ref, Snd, Store, UnitV, Val, Var,
)


def pretty_val(v: Val) -> str:
    t = type(v)
    if t is UnitV:
        return "()"
    if t is IntV:
        return str(v.n)
    if t is BoolV:
        return "true" if v.b else "false"
    if t is LocV:
        return f"#{v.loc}"
    if t is PairV:
        return f"({pretty_val(v.fst)}, {pretty_val(v.snd)})"
    if t is InjLV:
        return f"inl {_wrap_val(v.v)}"
    if t is InjRV:
        return f"inr {_wrap_val(v.v)}"
    if t is RecV:
        return pretty(Rec(v.f, v.x, v.body))
    raise TypeError(v)


def _wrap_val(v: Val) -> str:
    s = pretty_val(v)
    return f"({s})" if isinstance(v, (InjLV, InjRV, RecV)) else s


def _atomic(e: Expr) -> bool:
    if e.ann is not None:
        return True  # printed with its own parentheses
    if type(e) is Lit:
        return not isinstance(e.val, (InjLV, InjRV, RecV))
    return type(e) in (Var, Pair, Fork, CAS, FAA, ArrayMake, ArrayGet, ArraySet, Hole)


def _p(e: Expr) -> str:
    s = pretty(e)
    return s if _atomic(e) else f"({s})"


def _binder(x: str, ty) -> str:
    return x if ty is None else f"({x}: {ty})"


def pretty(e: Expr) -> str:
    if e.ann is not None:
        return f"({_bare(e)} : {e.ann})"
    return _bare(e)


def _bare(e: Expr) -> str:
    t = type(e)
    if t is Var:
        return e.name
    if t is Lit:
        return pretty_val(e.val)
    if t is Hole:
        return "[]"
    if t is Rec:
        if e.f == ANON and e.ret_ty is None and e.label is None:
            return f"fun {_binder(e.x, e.arg_ty)} => {pretty(e.body)}"
        head = f"rec {e.f} {_binder(e.x, e.arg_ty)}"
        if e.ret_ty is not None:
            head += f" : {e.ret_ty}"
        if e.label is not None:
            head += f" @ {e.label}"
        return f"{head} => {pretty(e.body)}"
    if t is App:
        fn = e.fn
        if (type(fn) is Rec and fn.f == ANON and fn.arg_ty is None and fn.ret_ty is None
                and fn.label is None and fn.ann is None):
            if fn.x == ANON:
                return f"{_p(e.arg)}; {pretty(fn.body)}"
            return f"let {fn.x} = {pretty(e.arg)} in {pretty(fn.body)}"
        return f"{_p(e.fn)} {_p(e.arg)}"
    if t is BinOp:
        return f"{_p(e.left)} {e.op} {_p(e.right)}"
    if t is If:
        return f"if {pretty(e.cond)} then {_p(e.then)} else {_p(e.else_)}"
    if t is Pair:
        return f"({pretty(e.fst)}, {pretty(e.snd)})"
    if t in (Fst, Snd, InjL, InjR, Ref):
        kw = {Fst: "fst", Snd: "snd", InjL: "inl", InjR: "inr", Ref: "ref"}[t]
        return f"{kw} {_p(e.e)}"
    if t is Load:
        return f"!{_p(e.e)}"
    if t is Store:
        return f"{_p(e.loc)} <- {_p(e.val)}"
    if t is Fork:
        return f"fork {{ {pretty(e.e)} }}"
    if t is Match:
        return (f"match {pretty(e.e)} with inl {e.xl} => {pretty(e.el)}"
                f" | inr {e.xr} => {pretty(e.er)} end")
    if t is CAS:
        return f"cas({pretty(e.loc)}, {pretty(e.expected)}, {pretty(e.new)})"
    if t is FAA:
        return f"faa({pretty(e.loc)}, {pretty(e.delta)})"
    if t is ArrayMake:
        return f"array_make({pretty(e.size)}, {pretty(e.init)})"
    if t is ArrayGet:
        return f"array_get({pretty(e.arr)}, {pretty(e.idx)})"
    if t is ArraySet:
        return f"array_set({pretty(e.arr)}, {pretty(e.idx)}, {pretty(e.val)})"
    raise TypeError(f"cannot print {e!r}")


def pretty_program(p: Program) -> str:
    lines = [f"output {o};" for o in p.outputs]
    for h, dom in p.highs:
        lines.append(f"high {h} : {{{', '.join(map(str, dom))}}};")
    for name, ty in p.externs:
        impl = p.extern_impls.get(name)
        body = "" if impl is None else f" = {_p(impl)}"
        lines.append(f"extern {name} : {ty}{body};")
    for name, e in p.defs:
        lines.append(f"def {name} = {_p(e)};")
    lines.append(f"main = {pretty(p.main)};")
    return "\n".join(lines) + "\n"
