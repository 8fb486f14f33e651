"""Tokenizer and recursive-descent parser for ``.ni`` programs.

Grammar, lowest precedence first::

    expr    ::= let | fun | rec | if | match | seq
    seq     ::= store [';' expr]
    store   ::= or ['<-' store]
    or      ::= and {'||' and}          and ::= cmp {'&&' cmp}
    cmp     ::= add [('=' | '<') add]   add ::= mul {('+' | '-') mul}
    mul     ::= unary {('*' | '/') unary}
    unary   ::= ('!' | 'ref' | 'not' | 'fst' | 'snd' | 'inl' | 'inr') unary | app
    app     ::= postfix {postfix}       postfix ::= atom {'.' field}

``let``/``fun``/``if``/... extend as far to the right as possible, also
when they appear in operand position.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .. import sectypes as st
from .program import Program
from .syntax import (
    ANON, App, ArrayGet, ArrayMake, ArraySet, BinOp, BoolV, CAS, Expr, FAA, Fork,
    Fst, If, InjL, InjR, IntV, Lit, Load, LocV, Match, Pair, Rec, Ref, Snd, Span,
    Store, UNIT, Var, children, free_vars,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected
        where = f"{line}:{col}: {message}"
        if expected:
            where += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(where)

    def __reduce__(self):
        return (type(self), (self.message, self.line, self.col, self.expected))


KEYWORDS = {
    "let", "in", "fun", "rec", "if", "then", "else", "match", "with", "inl", "inr",
    "end", "fork", "ref", "not", "fst", "snd", "true", "false", "cas", "faa",
    "array_make", "array_get", "array_set", "output", "high", "extern", "def",
    "unit", "int", "bool",
}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>=>|->|<-|\|\||&&|\.\.|[(){},;:.=<+\-*/!^@|\#])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # 'int', 'ident', 'kw', 'sym', 'eof'
    text: str
    line: int
    col: int

    @property
    def span(self) -> Span:
        return Span(self.line, self.col)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind in ("int", "sym"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "<eof>", line, pos - line_start + 1))
    return tokens


# Tokens that can start an application argument.
_ATOM_START_SYMS = {"(", "{", "#"}
_ATOM_START_KWS = {"true", "false", "fork", "cas", "faa", "array_make", "array_get", "array_set"}
_OPEN_KWS = {"let", "fun", "rec", "if", "match"}


@dataclass
class _FieldRef:
    """Placeholder for ``e.name`` until record layouts are known."""

    name: str
    span: Span


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        # field name -> set of (position, width) seen in record literals
        self.layouts: dict[str, set[tuple[int, int]]] = {}
        # inside a header declaration, a ';' outside brackets ends it
        # innermost bracket context: True where ';' is a separator, not a sequence
        self.semi_stops: list[bool] = []

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("kw", "sym") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"unexpected {self.tok.text!r}", {text})
        return self.advance()

    def ident(self) -> str:
        if self.tok.kind != "ident":
            self.fail(f"unexpected {self.tok.text!r}", {"identifier"})
        return self.advance().text

    def fail(self, msg: str, expected: set[str] = frozenset()):
        raise ParseError(msg, self.tok.line, self.tok.col, frozenset(expected))

    # -- programs ------------------------------------------------------------

    def program(self) -> Program:
        prog = Program()
        seen: set[str] = set()

        def declare(name: str, span: Span) -> None:
            if name in seen:
                raise ParseError(f"duplicate declaration of {name!r}", span.line, span.col)
            seen.add(name)
            prog.spans[name] = span

        while True:
            t = self.tok
            if self.at("output"):
                self.advance()
                name = self.ident()
                declare(name, t.span)
                prog.outputs.append(name)
            elif self.at("high"):
                self.advance()
                name = self.ident()
                declare(name, t.span)
                self.expect(":")
                prog.highs.append((name, self.domain()))
            elif self.at("extern"):
                self.advance()
                name = self.ident()
                declare(name, t.span)
                self.expect(":")
                prog.externs.append((name, self.type_()))
                if self.at("="):
                    self.advance()
                    prog.extern_impls[name] = self.decl_body()
            elif self.at("def"):
                self.advance()
                name = self.ident()
                declare(name, t.span)
                self.expect("=")
                prog.defs.append((name, self.decl_body()))
            elif t.kind == "ident" and t.text == "main" and self.peek().text == "=":
                self.advance()
                self.advance()
                prog.main = self.expr()
                prog.spans["main"] = t.span
                if self.at(";"):
                    self.advance()
                break
            elif t.kind == "eof":
                break
            else:
                prog.main = self.expr()
                prog.spans["main"] = t.span
                if self.at(";"):
                    self.advance()
                break
            self.expect(";")
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r} after main expression", {"<eof>"})
        if prog.main is None:
            prog.main = Lit(UNIT)
        self._resolve(prog)
        self._check_closed(prog)
        return prog

    def decl_body(self) -> Expr:
        # a ';' ends the body only when another header or `main =` follows
        return self.nested(self.expr)

    def nested(self, fn, stops: bool = False):
        self.semi_stops.append(stops)
        try:
            return fn()
        finally:
            self.semi_stops.pop()

    def domain(self) -> tuple[int, ...]:
        self.expect("{")
        lo = self.signed_int()
        if self.at(".."):
            self.advance()
            hi = self.signed_int()
            self.expect("}")
            if hi < lo:
                self.fail("empty domain")
            return tuple(range(lo, hi + 1))
        vals = [lo]
        while self.at(","):
            self.advance()
            vals.append(self.signed_int())
        self.expect("}")
        return tuple(dict.fromkeys(vals))

    def signed_int(self) -> int:
        neg = False
        if self.at("-"):
            self.advance()
            neg = True
        if self.tok.kind != "int":
            self.fail(f"unexpected {self.tok.text!r}", {"integer"})
        n = int(self.advance().text)
        return -n if neg else n

    # -- types -----------------------------------------------------------------

    def type_(self) -> st.SecType:
        left = self.prod_type()
        if self.at("->"):
            self.advance()
            return st.ArrowT(left, self.type_(), st.L)
        return left

    def prod_type(self) -> st.SecType:
        left = self.atom_type()
        if self.at("*"):
            self.advance()
            return st.ProdT(left, self.prod_type())
        return left

    def atom_type(self) -> st.SecType:
        if self.at("unit"):
            self.advance()
            return st.UnitT()
        if self.at("int", "bool"):
            ctor = st.IntT if self.advance().text == "int" else st.BoolT
            return ctor(self.opt_label(st.L))
        if self.at("ref"):
            self.advance()
            return st.RefT(self.atom_type())
        if self.at("("):
            self.advance()
            inner = self.type_()
            self.expect(")")
            if self.at("^"):
                if not isinstance(inner, st.ArrowT):
                    self.fail("only function types carry a label outside parentheses")
                inner = st.ArrowT(inner.arg, inner.res, self.opt_label(st.L))
            return inner
        self.fail(f"unexpected {self.tok.text!r}", {"unit", "int", "bool", "ref", "("})

    def opt_label(self, default: st.Label) -> st.Label:
        if not self.at("^"):
            return default
        self.advance()
        return self.label()

    def label(self) -> st.Label:
        t = self.tok
        if t.kind == "ident" and t.text in ("L", "H"):
            self.advance()
            return st.Label[t.text]
        self.fail(f"unexpected {t.text!r}", {"L", "H"})

    # -- expressions -----------------------------------------------------------

    def expr(self) -> Expr:
        t = self.tok
        if self.at("let"):
            return self.let_expr()
        if self.at("fun"):
            self.advance()
            params = self.params()
            self.expect("=>")
            return self._lambda(params, self.expr(), t.span)
        if self.at("rec"):
            return self.rec_expr()
        if self.at("if"):
            self.advance()
            c = self.expr()
            self.expect("then")
            a = self.expr()
            self.expect("else")
            return If(c, a, self.expr(), span=t.span)
        if self.at("match"):
            self.advance()
            scrut = self.expr()
            self.expect("with")
            self.expect("inl")
            xl = self.binder()
            self.expect("=>")
            el = self.nested(self.expr)
            self.expect("|")
            self.expect("inr")
            xr = self.binder()
            self.expect("=>")
            er = self.nested(self.expr)
            self.expect("end")
            return Match(scrut, xl, el, xr, er, span=t.span)
        return self.seq()

    def binder(self) -> str:
        if self.tok.kind == "ident":
            return self.advance().text
        self.fail(f"unexpected {self.tok.text!r}", {"identifier", "_"})

    def params(self) -> list[tuple[str, Optional[st.SecType]]]:
        """One or more ``x`` / ``(x: t)`` / ``()`` binders."""
        out: list[tuple[str, Optional[st.SecType]]] = []
        while True:
            if self.tok.kind == "ident":
                out.append((self.advance().text, None))
            elif self.at("(") and self.peek().text == ")":
                self.advance()
                self.advance()
                out.append((ANON, st.UnitT()))
            elif self.at("("):
                self.advance()
                name = self.binder()
                self.expect(":")
                ty = self.type_()
                self.expect(")")
                out.append((name, ty))
            else:
                break
        if not out:
            self.fail(f"unexpected {self.tok.text!r}", {"identifier", "("})
        return out

    def _lambda(self, params, body: Expr, span: Span) -> Expr:
        for name, ty in reversed(params):
            body = Rec(ANON, name, body, arg_ty=ty, span=span)
        return body

    def rec_expr(self) -> Expr:
        t = self.advance()
        f = self.binder()
        params = self.params()
        ret_ty = None
        label = None
        if self.at(":"):
            self.advance()
            ret_ty = self.type_()
        if self.at("@"):
            self.advance()
            label = self.label()
        self.expect("=>")
        body = self.expr()
        # rec f (x1: t1) (x2: t2) : r => e  ==  rec f (x1: t1) : (t2 -> r)^L => fun (x2: t2) => e
        inner = self._lambda(params[1:], body, t.span)
        if ret_ty is not None:
            for _, ty in reversed(params[1:]):
                ret_ty = st.ArrowT(ty, ret_ty, st.L) if ty is not None else None
                if ret_ty is None:
                    break
        x, arg_ty = params[0]
        return Rec(f, x, inner, arg_ty=arg_ty, ret_ty=ret_ty, label=label, span=t.span)

    def let_expr(self) -> Expr:
        t = self.advance()
        if self.at("(") and self.peek().kind == "ident" and self.peek(2).text == ",":
            self.advance()
            a = self.binder()
            self.expect(",")
            b = self.binder()
            self.expect(")")
            self.expect("=")
            rhs = self.expr()
            self.expect("in")
            body = self.expr()
            # let (a, b) = rhs in body  ==  let p = rhs in let a = fst p in let b = snd p in body
            tmp = f"{a}_{b}'"
            inner = _let(a, Fst(Var(tmp)), _let(b, Snd(Var(tmp)), body, t.span), t.span)
            return _let(tmp, rhs, inner, t.span)
        name = self.binder()
        ty = None
        if self.at(":"):
            self.advance()
            ty = self.type_()
        self.expect("=")
        rhs = self.expr()
        if ty is not None:
            rhs = _ascribe(rhs, ty)
        self.expect("in")
        return _let(name, rhs, self.expr(), t.span)

    def seq(self) -> Expr:
        first = self.store()
        if self.at(";") and self._continues_seq():
            t = self.advance()
            return _let(ANON, first, self.expr(), t.span)
        return first

    def _continues_seq(self) -> bool:
        if self.semi_stops and self.semi_stops[-1]:
            return False
        nxt = self.peek()
        if nxt.kind == "eof" or nxt.text in (")", "}", "end", "in", "then", "else", "|"):
            return False
        # a header declaration after a def body ends the definition
        if nxt.kind == "kw" and nxt.text in ("output", "high", "extern", "def"):
            return False
        if nxt.kind == "ident" and nxt.text == "main" and self.peek(2).text == "=":
            return False
        return True

    def store(self) -> Expr:
        left = self.binary(0)
        if self.at("<-"):
            t = self.advance()
            return Store(left, self.store(), span=t.span)
        return left

    _LEVELS = (("||",), ("&&",), ("=", "<"), ("+", "-"), ("*", "/"))

    def binary(self, level: int) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        ops = self._LEVELS[level]
        left = self.binary(level + 1)
        while self.at(*ops):
            t = self.advance()
            right = self.binary(level + 1)
            left = BinOp(t.text, left, right, span=t.span)
            if level == 2:  # comparisons do not chain
                break
        return left

    def unary(self) -> Expr:
        t = self.tok
        if self.at("!"):
            self.advance()
            return Load(self.unary(), span=t.span)
        if self.at("ref"):
            self.advance()
            return Ref(self.unary(), span=t.span)
        if self.at("not"):
            self.advance()
            e = self.unary()
            return If(e, Lit(BoolV(False)), Lit(BoolV(True)), span=t.span)
        if self.at("fst", "snd", "inl", "inr"):
            ctor = {"fst": Fst, "snd": Snd, "inl": InjL, "inr": InjR}[self.advance().text]
            return ctor(self.unary(), span=t.span)
        if self.at("-") and self.peek().kind == "int":
            self.advance()
            return Lit(IntV(-int(self.advance().text)), span=t.span)
        return self.app()

    def _starts_atom(self) -> bool:
        t = self.tok
        if t.kind in ("int", "ident"):
            return True
        if t.kind == "sym":
            return t.text in _ATOM_START_SYMS
        if t.kind == "kw":
            return t.text in _ATOM_START_KWS or t.text in _OPEN_KWS
        return False

    def app(self) -> Expr:
        e = self.postfix()
        while self._starts_atom():
            t = self.tok
            if self.at(*_OPEN_KWS):
                # trailing lambda / let argument: f fun x => ...
                e = App(e, self.expr(), span=t.span)
                break
            e = App(e, self.postfix(), span=t.span)
        return e

    def postfix(self) -> Expr:
        e = self.atom()
        while self.at(".") and self.peek().kind == "ident":
            self.advance()
            t = self.advance()
            e = _Proj(e, t.text, t.span)
        return e

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Lit(IntV(int(t.text)), span=t.span)
        if t.kind == "ident":
            self.advance()
            return Var(t.text, span=t.span)
        if self.at("true", "false"):
            self.advance()
            return Lit(BoolV(t.text == "true"), span=t.span)
        if self.at("#"):
            self.advance()
            if self.tok.kind != "int":
                self.fail(f"unexpected {self.tok.text!r}", {"integer"})
            return Lit(LocV(int(self.advance().text)), span=t.span)
        if self.at(*_OPEN_KWS):
            return self.expr()
        if self.at("fork"):
            self.advance()
            self.expect("{")
            body = self.nested(self.expr)
            self.expect("}")
            return Fork(body, span=t.span)
        if self.at("cas", "faa", "array_make", "array_get", "array_set"):
            kw = self.advance().text
            arity, ctor = {
                "cas": (3, CAS), "faa": (2, FAA), "array_make": (2, ArrayMake),
                "array_get": (2, ArrayGet), "array_set": (3, ArraySet),
            }[kw]
            self.expect("(")
            args = [self.nested(self.expr)]
            for _ in range(arity - 1):
                self.expect(",")
                args.append(self.nested(self.expr))
            self.expect(")")
            return ctor(*args, span=t.span)
        if self.at("{"):
            return self.record()
        if self.at("("):
            self.advance()
            if self.at(")"):
                self.advance()
                return Lit(UNIT, span=t.span)
            e = self.nested(self.expr)
            if self.at(","):
                self.advance()
                e2 = self.nested(self.expr)
                self.expect(")")
                return Pair(e, e2, span=t.span)
            if self.at(":"):
                self.advance()
                ty = self.type_()
                self.expect(")")
                return _ascribe(e, ty)
            self.expect(")")
            return e
        self.fail(f"unexpected {t.text!r}", {"expression"})

    def record(self) -> Expr:
        t = self.expect("{")
        names: list[str] = []
        vals: list[Expr] = []
        while True:
            names.append(self.ident())
            self.expect("=")
            vals.append(self.nested(self.expr, stops=True))
            if self.at(";"):
                self.advance()
                if self.at("}"):
                    break
                continue
            break
        self.expect("}")
        if len(names) < 2:
            raise ParseError("records need at least two fields", t.line, t.col)
        if len(set(names)) != len(names):
            raise ParseError("duplicate record field", t.line, t.col)
        for pos, name in enumerate(names):
            self.layouts.setdefault(name, set()).add((pos, len(names)))
        e = vals[-1]
        for v in reversed(vals[:-1]):
            e = Pair(v, e, span=t.span)
        return e

    # -- record projections ------------------------------------------------

    def _resolve(self, prog: Program) -> None:
        def fix(e):
            return _resolve_proj(e, self.layouts)

        prog.defs = [(n, fix(e)) for n, e in prog.defs]
        prog.extern_impls = {n: fix(e) for n, e in prog.extern_impls.items()}
        prog.main = fix(prog.main)

    def _check_closed(self, prog: Program) -> None:
        scope = set(prog.outputs) | set(prog.high_names)
        for name, _ in prog.externs:
            impl = prog.extern_impls.get(name)
            if impl is not None:
                _require_closed(impl, scope, name, prog)
            scope.add(name)
        for name, e in prog.defs:
            _require_closed(e, scope, name, prog)
            scope.add(name)
        _require_closed(prog.main, scope, "main", prog)


def _require_closed(e: Expr, scope: set[str], where: str, prog: Program) -> None:
    unbound = sorted(free_vars(e) - scope)
    if unbound:
        span = _occurrence(e, unbound[0]) or prog.spans.get(where) or Span(1, 1)
        raise ParseError(f"unbound variable {unbound[0]!r} in {where}", span.line, span.col)


def _occurrence(e: Expr, x: str) -> Optional[Span]:
    """Span of the first free occurrence of ``x``."""
    if type(e) is Var:
        return e.span if e.name == x else None
    if x not in free_vars(e):
        return None
    for c in children(e):
        span = _occurrence(c, x)
        if span is not None:
            return span
    return None


# `_Proj` is a transient node: it only lives between parsing and resolution.
from .syntax import _node  # noqa: E402


@_node
class _ProjNode(Expr):
    e: Expr
    name: str
    span: Optional[Span] = None


def _Proj(e: Expr, name: str, span: Span) -> Expr:
    return _ProjNode(e, name, span)


def _resolve_proj(e: Expr, layouts) -> Expr:
    from dataclasses import fields as dc_fields, replace

    if isinstance(e, _ProjNode):
        inner = _resolve_proj(e.e, layouts)
        shapes = layouts.get(e.name)
        if not shapes:
            raise ParseError(f"unknown record field {e.name!r}", e.span.line, e.span.col)
        if len(shapes) > 1:
            raise ParseError(f"ambiguous record field {e.name!r}", e.span.line, e.span.col)
        ((pos, width),) = shapes
        for _ in range(pos):
            inner = Snd(inner, span=e.span)
        if pos < width - 1:
            inner = Fst(inner, span=e.span)
        return inner
    if isinstance(e, Lit) or isinstance(e, Var):
        return e
    changes = {}
    for f in dc_fields(e):
        v = getattr(e, f.name)
        if f.compare and isinstance(v, Expr):
            nv = _resolve_proj(v, layouts)
            if nv is not v:
                changes[f.name] = nv
    return replace(e, **changes) if changes else e


def _let(name: str, rhs: Expr, body: Expr, span: Optional[Span]) -> Expr:
    return App(Rec(ANON, name, body, span=span), rhs, span=span)


def _ascribe(e: Expr, ty: st.SecType) -> Expr:
    object.__setattr__(e, "ann", ty)
    return e


def parse(text: str) -> Program:
    """Parse a whole ``.ni`` program."""
    return Parser(text).program()


def parse_expr(text: str) -> Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail(f"unexpected {p.tok.text!r}", {"<eof>"})
    return _resolve_proj(e, p.layouts)


def parse_type(text: str) -> st.SecType:
    p = Parser(text)
    t = p.type_()
    if p.tok.kind != "eof":
        p.fail(f"unexpected {p.tok.text!r}", {"<eof>"})
    return t
