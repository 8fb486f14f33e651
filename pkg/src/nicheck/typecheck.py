"""Algorithmic checker for the two-level security type system.

Types are synthesized bottom-up; subsumption is applied where a type is
expected (arguments, stored values, ascriptions) and branch types are
joined.  Literals synthesize at ``L``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import sectypes as st
from .lang.program import Program
from .lang.syntax import (
    ANON, App, BinOp, BoolV, Expr, FAA, Fork, Fst, If, InjL, InjLV, InjR, InjRV, IntV,
    Lit, Load, Pair, PairV, Rec, Ref, Snd, Span, Store, UnitV, Var, with_fields,
)
from .sectypes import SecType

ERROR_KINDS = (
    "LabelLeak", "NonFlatBranch", "BranchNotValue", "RefMismatch", "UnboundVariable",
    "ShapeMismatch", "MissingAnnotation", "NoRule", "NoJoin",
)


class SecTypeError(Exception):
    """A typing failure; ``kind`` is one of ``ERROR_KINDS``."""

    def __init__(self, kind: str, message: str, span: Optional[Span] = None,
                 rule: str = "", expected: Optional[SecType] = None,
                 actual: Optional[SecType] = None):
        assert kind in ERROR_KINDS, kind
        super().__init__(message)
        self.kind = kind
        self.message = message
        self.span = span
        self.rule = rule
        self.expected = expected
        self.actual = actual

    def __reduce__(self):
        return (type(self), (self.kind, self.message, self.span, self.rule,
                             self.expected, self.actual))

    def to_json(self) -> dict:
        out = {"kind": self.kind, "span": str(self.span) if self.span else None,
               "message": self.message, "rule": self.rule}
        if self.expected is not None:
            out["expected"] = str(self.expected)
        if self.actual is not None:
            out["actual"] = str(self.actual)
        return out

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.kind}: {self.message}"


@dataclass
class TypeCtx:
    """Variable typings; output names are implicitly ``ref int^L``."""

    vars: dict[str, SecType] = field(default_factory=dict)
    outputs: frozenset[str] = frozenset()

    def lookup(self, name: str) -> Optional[SecType]:
        if name in self.vars:
            return self.vars[name]
        if name in self.outputs:
            return st.RefT(st.IntT(st.L))
        return None

    def extend(self, name: str, ty: SecType) -> "TypeCtx":
        if name == ANON:
            return self
        return TypeCtx({**self.vars, name: ty}, self.outputs - {name})


_BOOL_OPS = ("&&", "||")
_ARITH_OPS = ("+", "-", "*", "/")


def _value_like(e: Expr) -> bool:
    """Syntactic values or variables, the branch shapes a high guard admits."""
    t = type(e)
    if t in (Lit, Var, Rec):
        return True
    if t is Pair:
        return _value_like(e.fst) and _value_like(e.snd)
    if t in (InjL, InjR):
        return _value_like(e.e)
    return False


class _Checker:
    def __init__(self) -> None:
        self.spans: list[Span] = []

    def fail(self, kind: str, msg: str, rule: str, **kw) -> None:
        raise SecTypeError(kind, msg, self.spans[-1] if self.spans else None, rule, **kw)

    # -- entry points ---------------------------------------------------------

    def synth(self, ctx: TypeCtx, e: Expr) -> SecType:
        pushed = e.span is not None
        if pushed:
            self.spans.append(e.span)
        try:
            if e.ann is not None:
                actual = self._synth(ctx, _fill_rec(e, e.ann))
                self.require(actual, e.ann, "T-Sub")
                return e.ann
            return self._synth(ctx, e)
        finally:
            if pushed:
                self.spans.pop()

    def check(self, ctx: TypeCtx, e: Expr, expected: SecType, rule: str) -> None:
        if e.ann is None and type(e) is Rec:
            e = _fill_rec(e, expected)
        self.require(self.synth(ctx, e), expected, rule)

    def require(self, actual: SecType, expected: SecType, rule: str) -> None:
        kind = st.first_mismatch(actual, expected)
        if kind is not None:
            self.fail(kind, f"expected {expected}, got {actual}", rule,
                      expected=expected, actual=actual)

    # -- rules ----------------------------------------------------------------

    def _synth(self, ctx: TypeCtx, e: Expr) -> SecType:
        t = type(e)
        if t is Var:
            ty = ctx.lookup(e.name)
            if ty is None:
                self.fail("UnboundVariable", f"unbound variable {e.name}", "T-Var")
            return ty
        if t is Lit:
            return self.lit(e.val)
        if t is Rec:
            return self.rec(ctx, e)
        if t is App:
            return self.app(ctx, e)
        if t is BinOp:
            return self.binop(ctx, e)
        if t is If:
            return self.if_(ctx, e)
        if t is Pair:
            return st.ProdT(self.synth(ctx, e.fst), self.synth(ctx, e.snd))
        if t is Fst or t is Snd:
            ty = self.synth(ctx, e.e)
            if not isinstance(ty, st.ProdT):
                self.fail("ShapeMismatch", f"projection from {ty}", "T-Proj", actual=ty)
            return ty.left if t is Fst else ty.right
        if t is Fork:
            self.synth(ctx, e.e)
            return st.UnitT()
        if t is Ref:
            return st.RefT(self.synth(ctx, e.e))
        if t is Load:
            ty = self.synth(ctx, e.e)
            if not isinstance(ty, st.RefT):
                self.fail("ShapeMismatch", f"load from {ty}", "T-Load", actual=ty)
            return ty.content
        if t is Store:
            ty = self.synth(ctx, e.loc)
            if not isinstance(ty, st.RefT):
                self.fail("ShapeMismatch", f"store to {ty}", "T-Store", actual=ty)
            self.check(ctx, e.val, ty.content, "T-Store")
            return st.UnitT()
        if t is FAA:
            ty = self.synth(ctx, e.loc)
            if not (isinstance(ty, st.RefT) and isinstance(ty.content, st.IntT)):
                self.fail("ShapeMismatch", f"fetch-and-add on {ty}", "T-FAA", actual=ty)
            self.check(ctx, e.delta, ty.content, "T-FAA")
            return ty.content
        self.fail("NoRule", f"no typing rule for {t.__name__}", "")

    def lit(self, v) -> SecType:
        t = type(v)
        if t is UnitV:
            return st.UnitT()
        if t is IntV:
            return st.IntT(st.L)
        if t is BoolV:
            return st.BoolT(st.L)
        if t is PairV:
            return st.ProdT(self.lit(v.fst), self.lit(v.snd))
        if t in (InjLV, InjRV):
            self.fail("NoRule", "sum values are untyped", "")
        self.fail("NoRule", f"no typing rule for literal {t.__name__}", "")

    def rec(self, ctx: TypeCtx, e: Rec) -> SecType:
        if e.arg_ty is None:
            self.fail("MissingAnnotation", f"binder {e.x} needs a type", "T-Rec")
        chi = e.label if e.label is not None else st.L
        inner = ctx.extend(e.x, e.arg_ty)
        if e.ret_ty is None:
            if e.f != ANON:
                self.fail("MissingAnnotation", f"recursive function {e.f} needs a result type",
                          "T-Rec")
            # the body type itself is a valid result: it is below its own stamp
            return st.ArrowT(e.arg_ty, self.synth(inner, e.body), chi)
        arrow = st.ArrowT(e.arg_ty, e.ret_ty, chi)
        inner = TypeCtx({**ctx.vars, **({e.f: arrow} if e.f != ANON else {})},
                        ctx.outputs - {e.f}).extend(e.x, e.arg_ty)
        self.check(inner, e.body, st.stamp(e.ret_ty, chi), "T-Rec")
        return arrow

    def app(self, ctx: TypeCtx, e: App) -> SecType:
        fn = e.fn
        if (type(fn) is Rec and fn.f == ANON and fn.arg_ty is None and fn.ret_ty is None
                and fn.ann is None):
            # let x = arg in body: the bound variable gets the argument's type
            arg_ty = self.synth(ctx, e.arg)
            return self.synth(ctx.extend(fn.x, arg_ty), fn.body)
        fty = self.synth(ctx, fn)
        if not isinstance(fty, st.ArrowT):
            self.fail("ShapeMismatch", f"application of {fty}", "T-App", actual=fty)
        self.check(ctx, e.arg, fty.arg, "T-App")
        return st.stamp(fty.res, fty.label)

    def binop(self, ctx: TypeCtx, e: BinOp) -> SecType:
        a = self.synth(ctx, e.left)
        b = self.synth(ctx, e.right)
        op = e.op
        if op in _ARITH_OPS or op == "<":
            if isinstance(a, st.IntT) and isinstance(b, st.IntT):
                lbl = a.label.join(b.label)
                return st.IntT(lbl) if op in _ARITH_OPS else st.BoolT(lbl)
        elif op in _BOOL_OPS:
            if isinstance(a, st.BoolT) and isinstance(b, st.BoolT):
                return st.BoolT(a.label.join(b.label))
        elif op == "=":
            if type(a) is type(b) and isinstance(a, (st.IntT, st.BoolT)):
                return st.BoolT(a.label.join(b.label))
        self.fail("ShapeMismatch", f"operator {op} on {a} and {b}", "T-BinOp")

    def if_(self, ctx: TypeCtx, e: If) -> SecType:
        guard = self.synth(ctx, e.cond)
        if not isinstance(guard, st.BoolT):
            self.fail("ShapeMismatch", f"condition of type {guard}", "T-If", actual=guard)
        if guard.label is st.L:
            return self.join(self.synth(ctx, e.then), self.synth(ctx, e.else_), "T-If")
        for branch in (e.then, e.else_):
            if type(branch) is Rec and branch.ann is None:
                self.fail("NonFlatBranch", "a function is never of flat type", "T-If-Flat")
            if not _value_like(branch):
                self.fail("BranchNotValue",
                          "under a high guard both branches must be values or variables",
                          "T-If-Flat")
        ty = st.stamp(self.join(self.synth(ctx, e.then), self.synth(ctx, e.else_),
                                "T-If-Flat"), st.H)
        if not st.is_flat(ty):
            self.fail("NonFlatBranch", f"branches of type {ty} under a high guard",
                      "T-If-Flat", actual=ty)
        return ty

    def join(self, a: SecType, b: SecType, rule: str) -> SecType:
        try:
            return st.join_type(a, b)
        except st.NoJoin:
            self.fail("NoJoin", f"branches of type {a} and {b}", rule, expected=a, actual=b)


def _fill_rec(e: Expr, ty: SecType) -> Expr:
    """Complete a function's missing binder annotations from an expected type."""
    if type(e) is not Rec or not isinstance(ty, st.ArrowT):
        return e
    if e.arg_ty is not None and e.ret_ty is not None and e.label is not None:
        return e
    return with_fields(
        e, arg_ty=e.arg_ty if e.arg_ty is not None else ty.arg,
        ret_ty=e.ret_ty if e.ret_ty is not None else ty.res,
        label=e.label if e.label is not None else ty.label)


def typecheck(ctx: TypeCtx, e: Expr) -> SecType:
    """Synthesize the type of ``e``; raises ``SecTypeError``."""
    return _Checker().synth(ctx, e)


# ---------------------------------------------------------------------------
# Whole programs
# ---------------------------------------------------------------------------


@dataclass
class DefTyping:
    name: str
    type: Optional[SecType]
    errors: list[SecTypeError] = field(default_factory=list)
    extern: bool = False

    def to_json(self) -> dict:
        return {"name": self.name, "type": None if self.type is None else str(self.type),
                "errors": [err.to_json() for err in self.errors], "extern": self.extern}


@dataclass
class TypingReport:
    program: str
    entries: list[DefTyping]

    @property
    def ok(self) -> bool:
        return all(not d.errors for d in self.entries)

    def get(self, name: str) -> DefTyping:
        for d in self.entries:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def errors(self) -> list[SecTypeError]:
        return [err for d in self.entries for err in d.errors]

    def to_json(self) -> dict:
        return {"program": self.program, "well_typed": self.ok,
                "definitions": [d.to_json() for d in self.entries]}


def program_context(p: Program) -> TypeCtx:
    """Highs are ``int^H``; outputs are implicit."""
    return TypeCtx({h: st.IntT(st.H) for h in p.high_names}, frozenset(p.outputs))


def typecheck_program(p: Program, extra: Optional[Mapping[str, SecType]] = None) -> TypingReport:
    """Check every def in order, then main, collecting one entry per definition.

    Externs are trusted at their declared types.  A definition that fails
    is left out of scope, so later uses of it report the dependency.
    """
    ctx = program_context(p)
    if extra:
        ctx = TypeCtx({**ctx.vars, **extra}, ctx.outputs)
    entries: list[DefTyping] = []
    broken: set[str] = set()
    for name, ty in p.externs:
        ctx = ctx.extend(name, ty)
        entries.append(DefTyping(name, ty, extern=True))
    for name, body in [*p.defs, ("main", p.main)]:
        try:
            ty = typecheck(ctx, body)
        except SecTypeError as err:
            if err.kind == "UnboundVariable" and any(b in err.message.split() for b in broken):
                err.message += " (an ill-typed definition)"
            entries.append(DefTyping(name, None, [err]))
            broken.add(name)
            continue
        entries.append(DefTyping(name, ty))
        ctx = ctx.extend(name, ty)
    return TypingReport(p.name, entries)
