"""Small-step semantics: head steps, thread steps, the thread pool and runs.

Thread-local reduction is deterministic thanks to the allocation oracle,
which always hands out the least unused location.  All functions are pure;
heaps and configurations are immutable.
"""
from __future__ import annotations

import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Protocol, Union

from .lang.program import Program
from .lang.pretty import pretty, pretty_val
from .lang.syntax import (
    ANON, App, ArrayGet, ArrayMake, ArraySet, BinOp, BoolV, CAS, Expr, FAA, Fork, Fst,
    If, InjL, InjLV, InjR, InjRV, IntV, Lit, Load, LocV, Match, Pair, PairV, Rec, RecV,
    Ref, Snd, Store, UNIT, UnitV, Val, Var, _EVAL_FIELDS, free_vars, subst_many, to_val,
    with_fields,
)


# ---------------------------------------------------------------------------
# Heaps and configurations
# ---------------------------------------------------------------------------


class Heap(Mapping):
    """Immutable finite map from locations to values, with a cached hash."""

    __slots__ = ("_d", "_hash")

    def __init__(self, items: Union[Mapping[int, Val], Iterable[tuple[int, Val]], None] = None):
        self._d: dict[int, Val] = dict(items) if items is not None else {}
        self._hash: Optional[int] = None

    def __getitem__(self, loc: int) -> Val:
        return self._d[loc]

    def __iter__(self) -> Iterator[int]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, loc) -> bool:
        return loc in self._d

    def get(self, loc, default=None):
        return self._d.get(loc, default)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if isinstance(other, Heap):
            return hash(self) == hash(other) and self._d == other._d
        return NotImplemented

    def __getstate__(self):
        return self._d

    def __setstate__(self, d):
        self._d = d
        self._hash = None

    def set(self, loc: int, v: Val) -> "Heap":
        d = dict(self._d)
        d[loc] = v
        return Heap(d)

    def set_many(self, items: Iterable[tuple[int, Val]]) -> "Heap":
        d = dict(self._d)
        d.update(items)
        return Heap(d)

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {pretty_val(v)}" for k, v in sorted(self._d.items()))
        return f"Heap({{{body}}})"


EMPTY_HEAP = Heap()


@dataclass(frozen=True)
class Config:
    threads: tuple[Expr, ...]
    heap: Heap

    def __post_init__(self):
        object.__setattr__(self, "threads", tuple(self.threads))


def alloc_oracle(heap: Mapping[int, Val]) -> int:
    """The least natural number not in the domain of ``heap``."""
    n = 0
    while n in heap:
        n += 1
    return n


def alloc_block(heap: Mapping[int, Val], size: int) -> int:
    """The least base of ``size`` consecutive free locations."""
    base = 0
    while True:
        clash = next((base + k for k in range(size) if base + k in heap), None)
        if clash is None:
            return base
        base = clash + 1


# ---------------------------------------------------------------------------
# Step results
# ---------------------------------------------------------------------------


class NoHeadStep(Exception):
    """A redex whose side conditions fail."""


class NotReducible(Exception):
    """The selected thread is already a value."""


class ThreadStuck(Exception):
    def __init__(self, index: int, reason: str):
        super().__init__(f"thread {index} stuck: {reason}")
        self.index = index
        self.reason = reason


@dataclass(frozen=True)
class Stepped:
    next: Expr
    forked: tuple[Expr, ...]
    heap: Heap


@dataclass(frozen=True)
class IsValue:
    pass


@dataclass(frozen=True)
class Stuck:
    reason: str


StepResult = Union[Stepped, IsValue, Stuck]
IS_VALUE = IsValue()


# ---------------------------------------------------------------------------
# Head reduction
# ---------------------------------------------------------------------------


def is_unboxed(v: Val) -> bool:
    t = type(v)
    if t in (UnitV, IntV, BoolV, LocV):
        return True
    if t in (InjLV, InjRV):
        return type(v.v) in (UnitV, IntV, BoolV, LocV)
    return False


def compare_safe(v1: Val, v2: Val) -> bool:
    return is_unboxed(v1) or is_unboxed(v2)


def _int(v: Val) -> int:
    if type(v) is not IntV:
        raise NoHeadStep(f"expected an integer, got {pretty_val(v)}")
    return v.n


def _bool(v: Val) -> bool:
    if type(v) is not BoolV:
        raise NoHeadStep(f"expected a boolean, got {pretty_val(v)}")
    return v.b


def _loc(v: Val, heap: Mapping[int, Val]) -> int:
    if type(v) is not LocV:
        raise NoHeadStep(f"expected a location, got {pretty_val(v)}")
    if v.loc not in heap:
        raise NoHeadStep(f"unallocated location #{v.loc}")
    return v.loc


def eval_binop(op: str, a: Val, b: Val) -> Val:
    if op == "+":
        return IntV(_int(a) + _int(b))
    if op == "-":
        return IntV(_int(a) - _int(b))
    if op == "*":
        return IntV(_int(a) * _int(b))
    if op == "/":
        x, y = _int(a), _int(b)
        if y == 0:
            raise NoHeadStep("division by zero")
        q = abs(x) // abs(y)
        return IntV(q if (x >= 0) == (y >= 0) else -q)
    if op == "<":
        return BoolV(_int(a) < _int(b))
    if op == "&&":
        return BoolV(_bool(a) and _bool(b))
    if op == "||":
        return BoolV(_bool(a) or _bool(b))
    if op == "=":
        if not compare_safe(a, b):
            raise NoHeadStep("comparison of two boxed values")
        return BoolV(a == b)
    raise NoHeadStep(f"unknown operator {op}")


def _lit(v: Val) -> Lit:
    return Lit(v)


_TRUE, _FALSE, _UNIT_E = Lit(BoolV(True)), Lit(BoolV(False)), Lit(UNIT)


def head_step(e: Expr, heap: Heap) -> tuple[Expr, Heap]:
    """One head reduction of the redex ``e``; raises ``NoHeadStep``.

    Every evaluated child of ``e`` must already be a value.
    """
    t = type(e)
    if t is App:
        f = e.fn.val
        if type(f) is not RecV:
            raise NoHeadStep(f"application of a non-function {pretty_val(f)}")
        env: dict[str, Val] = {}
        if f.f != ANON:
            env[f.f] = f
        env[f.x] = e.arg.val
        return subst_many(f.body, env), heap
    if t is Rec:
        if free_vars(e):
            raise NoHeadStep(f"free variable {min(free_vars(e))}")
        return Lit(RecV(e.f, e.x, e.body)), heap
    if t is BinOp:
        return _lit(eval_binop(e.op, e.left.val, e.right.val)), heap
    if t is If:
        return (e.then if _bool(e.cond.val) else e.else_), heap
    if t is Pair:
        return Lit(PairV(e.fst.val, e.snd.val)), heap
    if t is Fst or t is Snd:
        v = e.e.val
        if type(v) is not PairV:
            raise NoHeadStep(f"projection from a non-pair {pretty_val(v)}")
        return Lit(v.fst if t is Fst else v.snd), heap
    if t is InjL:
        return Lit(InjLV(e.e.val)), heap
    if t is InjR:
        return Lit(InjRV(e.e.val)), heap
    if t is Match:
        v = e.e.val
        if type(v) is InjLV:
            return subst_many(e.el, {e.xl: v.v}), heap
        if type(v) is InjRV:
            return subst_many(e.er, {e.xr: v.v}), heap
        raise NoHeadStep(f"match on a non-sum {pretty_val(v)}")
    if t is Ref:
        loc = alloc_oracle(heap)
        return Lit(LocV(loc)), heap.set(loc, e.e.val)
    if t is Load:
        return Lit(heap[_loc(e.e.val, heap)]), heap
    if t is Store:
        loc = _loc(e.loc.val, heap)
        return _UNIT_E, heap.set(loc, e.val.val)
    if t is CAS:
        loc = _loc(e.loc.val, heap)
        cur, expected = heap[loc], e.expected.val
        if not compare_safe(cur, expected):
            raise NoHeadStep("compare-and-set on boxed values")
        if cur == expected:
            return _TRUE, heap.set(loc, e.new.val)
        return _FALSE, heap
    if t is FAA:
        loc = _loc(e.loc.val, heap)
        old = _int(heap[loc])
        return Lit(IntV(old)), heap.set(loc, IntV(old + _int(e.delta.val)))
    if t is ArrayMake:
        n = _int(e.size.val)
        if n <= 0:
            raise NoHeadStep("array of non-positive size")
        base = alloc_block(heap, n)
        init = e.init.val
        return Lit(LocV(base)), heap.set_many((base + k, init) for k in range(n))
    if t is ArrayGet or t is ArraySet:
        arr = e.arr.val
        if type(arr) is not LocV:
            raise NoHeadStep(f"expected a location, got {pretty_val(arr)}")
        loc = arr.loc + _int(e.idx.val)
        if loc not in heap:
            raise NoHeadStep(f"unallocated location #{loc}")
        if t is ArrayGet:
            return Lit(heap[loc]), heap
        return _UNIT_E, heap.set(loc, e.val.val)
    if t is Var:
        raise NoHeadStep(f"free variable {e.name}")
    raise NoHeadStep(f"no rule for {type(e).__name__}")


# ---------------------------------------------------------------------------
# Thread-local and pool reduction
# ---------------------------------------------------------------------------


def thread_step(e: Expr, heap: Heap) -> StepResult:
    """Step one thread: lift a head step through its evaluation context, or fork."""
    if type(e) is Lit:
        return IS_VALUE
    try:
        nxt, heap2, forked = _step(e, heap)
    except NoHeadStep as exc:
        return Stuck(str(exc))
    return Stepped(nxt, forked, heap2)


_NO_FORK: tuple[Expr, ...] = ()


def _step(e: Expr, heap: Heap) -> tuple[Expr, Heap, tuple[Expr, ...]]:
    # Walk down the unique evaluation context iteratively, then rebuild.
    path: list[tuple[Expr, str]] = []
    while True:
        for name in _EVAL_FIELDS.get(type(e), ()):
            sub = getattr(e, name)
            if type(sub) is not Lit:
                path.append((e, name))
                e = sub
                break
        else:
            break
    if type(e) is Fork:
        r, forked = _UNIT_E, (e.e,)
    else:
        r, heap = head_step(e, heap)
        forked = _NO_FORK
    for node, name in reversed(path):
        r = with_fields(node, **{name: r})
    return r, heap, forked


def pool_step(c: Config, i: int) -> Config:
    """Reduce thread ``i``; forked threads go to the end of the pool."""
    if not 0 <= i < len(c.threads):
        raise IndexError(f"no thread {i}")
    res = thread_step(c.threads[i], c.heap)
    if type(res) is IsValue:
        raise NotReducible(i)
    if type(res) is Stuck:
        raise ThreadStuck(i, res.reason)
    threads = c.threads[:i] + (res.next,) + c.threads[i + 1:] + res.forked
    return Config(threads, res.heap)


def low_equiv(h1: Mapping[int, Val], h2: Mapping[int, Val], outputs: Iterable[int]) -> bool:
    """Both heaps hold the same integer at every output location."""
    for loc in outputs:
        v = h1.get(loc)
        if type(v) is not IntV or v != h2.get(loc):
            return False
    return True


# ---------------------------------------------------------------------------
# Closing programs
# ---------------------------------------------------------------------------


class MissingImplementation(Exception):
    def __init__(self, name: str):
        super().__init__(f"extern {name!r} has no implementation")
        self.name = name

    def __reduce__(self):
        return (type(self), (self.name,))


def initial_heap(p: Program) -> tuple[Heap, dict[str, int]]:
    """Allocate every output, in declaration order, initialised to 0."""
    heap = EMPTY_HEAP
    locs: dict[str, int] = {}
    for name in p.outputs:
        loc = alloc_oracle(heap)
        heap = heap.set(loc, IntV(0))
        locs[name] = loc
    return heap, locs


def link_program(p: Program, impls: Optional[Mapping[str, Expr]] = None,
                 base: Optional[Mapping[str, Val]] = None) -> Expr:
    """Close ``main`` over externs and defs.

    ``base`` gives values for highs and outputs; names it omits stay free.
    Definitions that are syntactic values are substituted; the rest are
    let-bound around ``main`` so their effects run first, in order.
    """
    impls = dict(p.extern_impls) | dict(impls or {})
    bindings: list[tuple[str, Expr]] = []
    for name, _ in p.externs:
        if name not in impls:
            raise MissingImplementation(name)
        bindings.append((name, impls[name]))
    bindings.extend(p.defs)

    env: dict[str, Val] = dict(base or {})
    lets: list[tuple[str, Expr]] = []
    for name, body in bindings:
        body = subst_many(body, env)
        v = to_val(body)
        if v is not None:
            env[name] = v
        else:
            lets.append((name, body))
    main = subst_many(p.main, env)
    for name, body in reversed(lets):
        main = App(Rec(ANON, name, main), body)
    return main


def instantiate(p: Program, inputs: Mapping[str, int],
                impls: Optional[Mapping[str, Expr]] = None) -> tuple[Expr, Heap, dict[str, int]]:
    """The closed main thread and initial heap for one choice of high inputs."""
    missing = [h for h in p.high_names if h not in inputs]
    if missing:
        raise KeyError(f"no value for high input {missing[0]!r}")
    heap, locs = initial_heap(p)
    env: dict[str, Val] = {name: LocV(loc) for name, loc in locs.items()}
    env.update({h: IntV(int(inputs[h])) for h in p.high_names})
    return link_program(p, impls, env), heap, locs


# ---------------------------------------------------------------------------
# Schedulers and concrete runs
# ---------------------------------------------------------------------------


class Scheduler(Protocol):
    def choose(self, config: Config, runnable: list[int]) -> int: ...


class RoundRobin:
    """Cycle through thread indices, skipping terminated threads."""

    def __init__(self) -> None:
        self.cursor = 0

    def choose(self, config: Config, runnable: list[int]) -> int:
        pick = next((i for i in runnable if i >= self.cursor), runnable[0])
        self.cursor = pick + 1
        return pick


class RandomScheduler:
    def __init__(self, seed: int) -> None:
        self.rng = random.Random(seed)

    def choose(self, config: Config, runnable: list[int]) -> int:
        return self.rng.choice(runnable)


def make_scheduler(kind: str, seed: Optional[int] = None) -> Scheduler:
    if kind in ("rr", "round-robin"):
        return RoundRobin()
    if kind == "random":
        if seed is None:
            raise ValueError("the random scheduler needs a seed")
        return RandomScheduler(seed)
    raise ValueError(f"unknown scheduler {kind!r}")


DEFAULT_FUEL = 10**6


def _observable(v: Optional[Val]):
    if type(v) is IntV:
        return v.n
    return None if v is None else pretty_val(v)


@dataclass
class RunReport:
    value: Optional[Val]
    outputs: dict[str, object]
    steps: int
    schedule: list[int] = field(default_factory=list)
    threads: int = 1

    def to_json(self) -> dict:
        return {
            "value": None if self.value is None else pretty_val(self.value),
            "outputs": self.outputs,
            "steps": self.steps,
            "schedule": self.schedule,
        }


class RunError(Exception):
    def __init__(self, message: str, report: RunReport):
        super().__init__(message)
        self.report = report


class StuckReport(RunError):
    def __init__(self, index: int, reason: str, report: RunReport):
        super().__init__(f"thread {index} stuck: {reason}", report)
        self.index = index
        self.reason = reason


class FuelExhausted(RunError):
    pass


def run_config(config: Config, sched: Scheduler, fuel: int = DEFAULT_FUEL,
               outputs: Optional[Mapping[str, int]] = None) -> tuple[Config, RunReport]:
    """Run until the main thread is a value."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    outputs = dict(outputs or {})
    schedule: list[int] = []

    def report(c: Config) -> RunReport:
        main = c.threads[0]
        return RunReport(
            value=main.val if type(main) is Lit else None,
            outputs={n: _observable(c.heap.get(loc)) for n, loc in outputs.items()},
            steps=len(schedule), schedule=list(schedule), threads=len(c.threads))

    c = config
    while type(c.threads[0]) is not Lit:
        if len(schedule) >= fuel:
            raise FuelExhausted(f"fuel of {fuel} steps exhausted", report(c))
        runnable = [i for i, t in enumerate(c.threads) if type(t) is not Lit]
        i = sched.choose(c, runnable)
        try:
            c = pool_step(c, i)
        except ThreadStuck as exc:
            raise StuckReport(i, exc.reason, report(c)) from None
        schedule.append(i)
    return c, report(c)


def run(p: Program, inputs: Mapping[str, int], sched: Union[Scheduler, str] = "rr",
        fuel: int = DEFAULT_FUEL, seed: Optional[int] = None,
        impls: Optional[Mapping[str, Expr]] = None) -> RunReport:
    if isinstance(sched, str):
        sched = make_scheduler(sched, seed)
    main, heap, locs = instantiate(p, inputs, impls)
    _, rep = run_config(Config((main,), heap), sched, fuel, locs)
    return rep


def describe_thread(e: Expr, limit: int = 200) -> str:
    s = pretty(e)
    return s if len(s) <= limit else s[: limit - 3] + "..."
