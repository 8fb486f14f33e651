"""Abstract syntax of the concurrent ML-like language.

Values and expressions are immutable and structurally compared.  Every
node caches its hash and its free-variable set, because the verifier
hashes whole thread pools millions of times and substitution skips
closed subterms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from operator import attrgetter
from typing import Any, Iterator, Optional

__all__ = [
    "Span", "Val", "UnitV", "IntV", "BoolV", "LocV", "RecV", "PairV", "InjLV", "InjRV",
    "Expr", "Var", "Lit", "Rec", "App", "BinOp", "If", "Pair", "Fst", "Snd", "InjL",
    "InjR", "Match", "Fork", "Ref", "Load", "Store", "CAS", "FAA", "ArrayMake",
    "ArrayGet", "ArraySet", "Hole", "BINOPS", "ANON", "UNIT",
    "is_value", "value_of", "to_val", "free_vars", "subst", "subst_many",
    "Frame", "EvalCtx", "fill", "decompose", "AlreadyValue", "eval_fields",
    "children", "with_fields",
]

ANON = "_"
BINOPS = ("+", "-", "*", "/", "=", "<", "&&", "||")


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _node(cls):
    """dataclass(frozen) plus a cached structural hash and fast-failing eq."""
    cls = dataclass(frozen=True, eq=False)(cls)
    names = tuple(f.name for f in fields(cls) if f.compare)
    tag = cls.__name__
    if len(names) > 1:
        key = attrgetter(*names)
    elif names:
        one = attrgetter(names[0])

        def key(self):
            return (one(self),)
    else:
        def key(self):
            return ()

    def __hash__(self):
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((tag, key(self)))
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other):
        if self is other:
            return True
        if type(other) is not cls:
            return NotImplemented if not isinstance(other, (Val, Expr)) else False
        if hash(self) != hash(other):
            return False
        return key(self) == key(other)

    def __getstate__(self):
        # cached hashes depend on the per-process string hash seed
        return {k: v for k, v in self.__dict__.items() if k not in ("_hash", "_fv")}

    cls.__hash__ = __hash__
    cls.__eq__ = __eq__
    cls.__getstate__ = __getstate__
    cls._key = key
    return cls


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


class Val:
    """Base class of runtime values."""

    __slots__ = ()


@_node
class UnitV(Val):
    pass


@_node
class IntV(Val):
    n: int


@_node
class BoolV(Val):
    b: bool


@_node
class LocV(Val):
    loc: int


@_node
class RecV(Val):
    f: str
    x: str
    body: "Expr"


@_node
class PairV(Val):
    fst: Val
    snd: Val


@_node
class InjLV(Val):
    v: Val


@_node
class InjRV(Val):
    v: Val


UNIT = UnitV()


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class Expr:
    """Base class of expressions.

    ``span`` and ``ann`` are metadata: a source position and an optional
    type ascription for the checker.  Neither takes part in equality.
    """

    __slots__ = ()

    span: Optional[Span]
    ann: Any


def _meta():
    return field(default=None, compare=False, repr=False, kw_only=True)


@_node
class Var(Expr):
    name: str
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Lit(Expr):
    val: Val
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Rec(Expr):
    """``rec f x => body``; ``f == "_"`` for plain lambdas.

    ``arg_ty``, ``ret_ty`` and ``label`` are the optional binder ascriptions.
    """

    f: str
    x: str
    body: Expr
    arg_ty: Any = field(default=None, compare=False, repr=False, kw_only=True)
    ret_ty: Any = field(default=None, compare=False, repr=False, kw_only=True)
    label: Any = field(default=None, compare=False, repr=False, kw_only=True)
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class App(Expr):
    fn: Expr
    arg: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class If(Expr):
    cond: Expr
    then: Expr
    else_: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Pair(Expr):
    fst: Expr
    snd: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Fst(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Snd(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class InjL(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class InjR(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Match(Expr):
    e: Expr
    xl: str
    el: Expr
    xr: str
    er: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Fork(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Ref(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Load(Expr):
    e: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Store(Expr):
    loc: Expr
    val: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class CAS(Expr):
    loc: Expr
    expected: Expr
    new: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class FAA(Expr):
    loc: Expr
    delta: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class ArrayMake(Expr):
    size: Expr
    init: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class ArrayGet(Expr):
    arr: Expr
    idx: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class ArraySet(Expr):
    arr: Expr
    idx: Expr
    val: Expr
    span: Optional[Span] = _meta()
    ann: Any = _meta()


@_node
class Hole(Expr):
    """The hole of a single-frame evaluation context."""

    span: Optional[Span] = _meta()
    ann: Any = _meta()


# Sub-expressions that are evaluated before the node itself becomes a redex,
# in evaluation order (right-to-left, argument before function).
_EVAL_FIELDS: dict[type, tuple[str, ...]] = {
    App: ("arg", "fn"),
    BinOp: ("right", "left"),
    If: ("cond",),
    Pair: ("snd", "fst"),
    Fst: ("e",),
    Snd: ("e",),
    InjL: ("e",),
    InjR: ("e",),
    Match: ("e",),
    Ref: ("e",),
    Load: ("e",),
    Store: ("val", "loc"),
    CAS: ("new", "expected", "loc"),
    FAA: ("delta", "loc"),
    ArrayMake: ("init", "size"),
    ArrayGet: ("idx", "arr"),
    ArraySet: ("val", "idx", "arr"),
}

# All expression-valued children, for traversals.
_CHILDREN: dict[type, tuple[str, ...]] = {
    Var: (), Lit: (), Hole: (), Rec: ("body",), Fork: ("e",),
    Match: ("e", "el", "er"), If: ("cond", "then", "else_"),
}
for _cls, _fs in _EVAL_FIELDS.items():
    _CHILDREN.setdefault(_cls, _fs)


_CACHES = ("_hash", "_fv")


def with_fields(node: Expr, /, **changes: Expr) -> Expr:
    """A copy of ``node`` with some fields replaced; much cheaper than ``replace``."""
    new = object.__new__(type(node))
    d = new.__dict__
    d.update(node.__dict__)
    for k in _CACHES:
        d.pop(k, None)
    d.update(changes)
    return new


def eval_fields(e: Expr) -> tuple[str, ...]:
    return _EVAL_FIELDS.get(type(e), ())


def children(e: Expr) -> Iterator[Expr]:
    for name in _CHILDREN[type(e)]:
        yield getattr(e, name)


def is_value(e: Expr) -> bool:
    return type(e) is Lit


def value_of(e: Expr) -> Val:
    assert type(e) is Lit, e
    return e.val


def to_val(e: Expr) -> Optional[Val]:
    """The value denoted by a syntactic value (closed Rec, pair/inj of values)."""
    t = type(e)
    if t is Lit:
        return e.val
    if t is Rec:
        if free_vars(e):
            return None
        return RecV(e.f, e.x, e.body)
    if t is Pair:
        a, b = to_val(e.fst), to_val(e.snd)
        return None if a is None or b is None else PairV(a, b)
    if t is InjL:
        v = to_val(e.e)
        return None if v is None else InjLV(v)
    if t is InjR:
        v = to_val(e.e)
        return None if v is None else InjRV(v)
    return None


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------

_EMPTY: frozenset[str] = frozenset()


def free_vars(e: Expr) -> frozenset[str]:
    fv = e.__dict__.get("_fv")
    if fv is not None:
        return fv
    t = type(e)
    if t is Var:
        fv = frozenset((e.name,))
    elif t is Lit or t is Hole:
        fv = _EMPTY
    elif t is Rec:
        fv = free_vars(e.body) - {e.f, e.x}
    elif t is Match:
        fv = free_vars(e.e) | (free_vars(e.el) - {e.xl}) | (free_vars(e.er) - {e.xr})
    else:
        fv = _EMPTY
        for c in children(e):
            fv = fv | free_vars(c)
    object.__setattr__(e, "_fv", fv)
    return fv


def subst(e: Expr, x: str, v: Val) -> Expr:
    """Replace free occurrences of ``x`` in ``e`` by the value ``v``.

    Substituted values are closed, so shadowing is the only capture concern.
    """
    return subst_many(e, {x: v})


def subst_many(e: Expr, env: dict[str, Val]) -> Expr:
    env = {k: v for k, v in env.items() if k != ANON}
    if not env:
        return e
    return _subst(e, env)


def _subst(e: Expr, env: dict[str, Val]) -> Expr:
    fv = free_vars(e)
    if fv.isdisjoint(env):
        return e
    t = type(e)
    if t is Var:
        return Lit(env[e.name], span=e.span)
    if t is Rec:
        inner = _shadow(env, e.f, e.x)
        return with_fields(e, body=_subst(e.body, inner)) if inner else e
    if t is Match:
        el = _subst(e.el, inner) if (inner := _shadow(env, e.xl)) else e.el
        er = _subst(e.er, inner) if (inner := _shadow(env, e.xr)) else e.er
        return with_fields(e, e=_subst(e.e, env), el=el, er=er)
    return with_fields(e, **{n: _subst(getattr(e, n), env) for n in _CHILDREN[t]})


def _shadow(env: dict[str, Val], *names: str) -> dict[str, Val]:
    if not any(n in env for n in names):
        return env
    return {k: v for k, v in env.items() if k not in names}


# ---------------------------------------------------------------------------
# Evaluation contexts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """A single-hole context: ``node`` with a ``Hole`` in field ``hole``."""

    node: Expr
    hole: str

    def plug(self, e: Expr) -> Expr:
        return with_fields(self.node, **{self.hole: e})


EvalCtx = tuple[Frame, ...]  # outermost frame first


class AlreadyValue(Exception):
    pass


def fill(ctx: EvalCtx, e: Expr) -> Expr:
    for frame in reversed(ctx):
        e = frame.plug(e)
    return e


_HOLE = Hole()


def decompose(e: Expr) -> tuple[EvalCtx, Expr]:
    """Split a non-value into its unique evaluation context and redex.

    The redex is the innermost node whose evaluated children are all values;
    whether it can actually take a head step is decided by the semantics.
    """
    if type(e) is Lit:
        raise AlreadyValue(e)
    frames: list[Frame] = []
    while True:
        for name in _EVAL_FIELDS.get(type(e), ()):
            sub = getattr(e, name)
            if type(sub) is not Lit:
                frames.append(Frame(with_fields(e, **{name: _HOLE}), name))
                e = sub
                break
        else:
            return tuple(frames), e
