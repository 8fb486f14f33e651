"""Deciding strong low-bisimilarity of two runs by product exploration.

Two runs of the same program on different high inputs are explored in
lock-step: a product step picks one thread index and steps that thread on
both sides.  A pair of configurations is *bad* if it violates one of the
pair conditions or can step to a bad pair; the program is secure for the
input pair iff the initial pair is not bad.  Because "bad" propagates
backwards along every product edge, the initial pair is bad exactly when a
violating pair is reachable, so breadth-first search both decides the
greatest fixpoint and yields a shortest counterexample schedule.
``decide_pair_gfp`` computes the fixpoint literally and serves as a
cross-check.
"""
from __future__ import annotations

import itertools
import multiprocessing
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .lang.program import Program
from .lang.pretty import pretty_val
from .lang.syntax import Expr, IntV, Lit
from .semantics import (
    Config, Heap, IsValue, Stepped, Stuck as StuckStep, describe_thread, instantiate,
    low_equiv, thread_step,
)

VIOLATION_KINDS = ("MainValueMismatch", "LowHeapMismatch", "StepMismatch", "StuckThread")


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    thread: Optional[int] = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "thread": self.thread}


@dataclass(frozen=True, eq=False)
class PairState:
    left: Config
    right: Config

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.left.threads, self.left.heap, self.right.threads, self.right.heap))
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, PairState):
            return NotImplemented
        return (hash(self) == hash(other) and self.left == other.left
                and self.right == other.right)

    def __getstate__(self):
        return {"left": self.left, "right": self.right}

    def swap(self) -> "PairState":
        return PairState(self.right, self.left)


@dataclass(frozen=True)
class VerifyConfig:
    """Exploration bounds and input domains (``None`` means: as declared)."""

    domains: Optional[Mapping[str, tuple[int, ...]]] = None
    max_pairs: int = 1_000_000
    max_depth: int = 100_000
    timeout: Optional[float] = None  # seconds per input pair
    audit: bool = False

    def domains_for(self, p: Program) -> dict[str, tuple[int, ...]]:
        doms = dict(p.highs)
        for name, dom in (self.domains or {}).items():
            if name not in doms:
                raise KeyError(f"no high input named {name!r}")
            doms[name] = tuple(dom)
        for name, dom in doms.items():
            if not dom:
                raise ValueError(f"empty domain for {name!r}")
        return doms


@dataclass
class CounterTrace:
    inputs_left: dict[str, int]
    inputs_right: dict[str, int]
    schedule: list[int]
    kind: str
    detail: str
    final: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"inputs_left": self.inputs_left, "inputs_right": self.inputs_right,
                "schedule": self.schedule, "kind": self.kind, "detail": self.detail,
                "final": self.final}


@dataclass
class Secure:
    pairs_explored: int
    relation_size: int
    audit_violations: Optional[int] = None
    relation: Optional[set] = field(default=None, repr=False, compare=False)
    name = "Secure"

    def to_json(self) -> dict:
        out = {"verdict": self.name, "pairs_explored": self.pairs_explored,
               "relation_size": self.relation_size}
        if self.audit_violations is not None:
            out["audit_violations"] = self.audit_violations
        return out


@dataclass
class Insecure:
    trace: CounterTrace
    pairs_explored: int
    name = "Insecure"

    def to_json(self) -> dict:
        return {"verdict": self.name, "pairs_explored": self.pairs_explored,
                "trace": self.trace.to_json()}


@dataclass
class Stuck(Insecure):
    name = "Stuck"


@dataclass
class BoundExceeded:
    bound: str
    value: Union[int, float]
    pairs_explored: int
    name = "BoundExceeded"

    def to_json(self) -> dict:
        return {"verdict": self.name, "pairs_explored": self.pairs_explored,
                "bound": self.bound, "value": self.value}


Verdict = Union[Secure, Insecure, Stuck, BoundExceeded]


# ---------------------------------------------------------------------------
# One product state
# ---------------------------------------------------------------------------


def _expand(p: PairState, outputs: Iterable[int]) -> tuple[list[Violation], list[tuple[int, PairState]]]:
    """Pair conditions and, when there are none, the product successors."""
    viol: list[Violation] = []
    lt, rt = p.left.threads, p.right.threads
    lmain, rmain = lt[0], rt[0]
    lval, rval = type(lmain) is Lit, type(rmain) is Lit
    if lval and rval:
        if lmain != rmain:
            viol.append(Violation("MainValueMismatch",
                                  f"{pretty_val(lmain.val)} vs {pretty_val(rmain.val)}", 0))
    elif lval or rval:
        viol.append(Violation("MainValueMismatch", "only one main thread has terminated", 0))
    if not low_equiv(p.left.heap, p.right.heap, outputs):
        viol.append(Violation("LowHeapMismatch", "output locations differ"))
    if len(lt) != len(rt):
        viol.append(Violation("StepMismatch", f"{len(lt)} vs {len(rt)} threads"))
        return viol, []

    lh, rh = p.left.heap, p.right.heap
    steps: list[tuple[int, Stepped, Stepped]] = []
    for i in range(len(lt)):
        a = thread_step(lt[i], lh) if type(lt[i]) is not Lit else None
        b = thread_step(rt[i], rh) if type(rt[i]) is not Lit else None
        if type(a) is StuckStep or type(b) is StuckStep:
            why = a.reason if type(a) is StuckStep else b.reason
            viol.append(Violation("StuckThread", why, i))
        elif (a is None) != (b is None):
            side = "left" if a is None else "right"
            viol.append(Violation("StepMismatch", f"only the {side} thread is a value", i))
        elif a is not None:
            steps.append((i, a, b))
    if viol:
        return viol, []
    succ = []
    for i, a, b in steps:
        left = Config(lt[:i] + (a.next,) + lt[i + 1:] + a.forked, a.heap)
        right = Config(rt[:i] + (b.next,) + rt[i + 1:] + b.forked, b.heap)
        succ.append((i, PairState(left, right)))
    return viol, succ


def pair_conditions(p: PairState, outputs: Iterable[int]) -> list[Violation]:
    return _expand(p, tuple(outputs))[0]


def product_successors(p: PairState) -> list[tuple[int, PairState]]:
    return _expand(p, ())[1]


def _verdict_for(viol: Violation) -> type:
    return Stuck if viol.kind == "StuckThread" else Insecure


# ---------------------------------------------------------------------------
# Deciding one input pair
# ---------------------------------------------------------------------------


def _snapshot(p: PairState, locs: Mapping[str, int]) -> dict:
    def side(c: Config) -> dict:
        low = {}
        for name, loc in locs.items():
            v = c.heap.get(loc)
            low[name] = v.n if type(v) is IntV else (None if v is None else pretty_val(v))
        return {"threads": [describe_thread(t) for t in c.threads], "low_heap": low}
    return {"left": side(p.left), "right": side(p.right)}


def decide_pair(main_left: Expr, main_right: Expr, heap: Heap, locs: Mapping[str, int],
                cfg: VerifyConfig = VerifyConfig(),
                inputs: tuple[Mapping[str, int], Mapping[str, int]] = ({}, {}),
                keep_relation: bool = False) -> Verdict:
    """Breadth-first exploration of the product from one initial pair."""
    outputs = tuple(locs.values())
    start = PairState(Config((main_left,), heap), Config((main_right,), heap))
    # state -> (parent, thread index, depth)
    seen: dict[PairState, tuple[Optional[PairState], int, int]] = {start: (None, -1, 0)}
    queue = deque([start])
    deadline = None if cfg.timeout is None else time.monotonic() + cfg.timeout
    # Equal threads reached along different paths are distinct objects; sharing
    # one copy lets later comparisons stop at the identity check.
    shared: dict[Expr, Expr] = {}

    def canon(c: Config) -> Config:
        return Config(tuple([shared.setdefault(t, t) for t in c.threads]), c.heap)

    while queue:
        p = queue.popleft()
        depth = seen[p][2]
        viol, succ = _expand(p, outputs)
        if viol:
            first = viol[0]
            schedule = []
            q = p
            while True:
                parent, i, _ = seen[q]
                if parent is None:
                    break
                schedule.append(i)
                q = parent
            schedule.reverse()
            trace = CounterTrace(dict(inputs[0]), dict(inputs[1]), schedule, first.kind,
                                 first.detail, _snapshot(p, locs))
            return _verdict_for(first)(trace, len(seen))
        if deadline is not None and time.monotonic() > deadline:
            return BoundExceeded("timeout", cfg.timeout, len(seen))
        for i, s in succ:
            s = PairState(canon(s.left), canon(s.right))
            if s in seen:
                continue
            if depth + 1 > cfg.max_depth:
                return BoundExceeded("max_depth", cfg.max_depth, len(seen))
            if len(seen) >= cfg.max_pairs:
                return BoundExceeded("max_pairs", cfg.max_pairs, len(seen))
            seen[s] = (p, i, depth + 1)
            queue.append(s)
    verdict = Secure(len(seen), len(seen))
    if cfg.audit:
        verdict.audit_violations = closure_audit(seen.keys(), outputs)
    if keep_relation:
        verdict.relation = set(seen)
    return verdict


def decide_pair_gfp(main_left: Expr, main_right: Expr, heap: Heap, locs: Mapping[str, int],
                    max_pairs: int = 1_000_000) -> tuple[bool, Optional[int]]:
    """Literal greatest-fixpoint computation over the reachable product graph.

    Returns whether the initial pair is good and, if not, the length of the
    shortest path from it to a violating pair.
    """
    outputs = tuple(locs.values())
    start = PairState(Config((main_left,), heap), Config((main_right,), heap))
    succs: dict[PairState, list[PairState]] = {}
    violating: set[PairState] = set()
    stack = [start]
    while stack:
        p = stack.pop()
        if p in succs:
            continue
        viol, nxt = _expand(p, outputs)
        succs[p] = [s for _, s in nxt]
        if viol:
            violating.add(p)
        if len(succs) > max_pairs:
            raise RuntimeError("product graph too large")
        stack.extend(s for s in succs[p] if s not in succs)
    # good := all pairs; repeatedly drop pairs that violate or step outside good
    good = set(succs) - violating
    changed = True
    while changed:
        changed = False
        for p in list(good):
            if any(s not in good for s in succs[p]):
                good.discard(p)
                changed = True
    if start in good:
        return True, None
    dist = {start: 0}
    frontier = deque([start])
    while frontier:
        p = frontier.popleft()
        if p in violating:
            return False, dist[p]
        for s in succs[p]:
            if s not in dist:
                dist[s] = dist[p] + 1
                frontier.append(s)
    raise AssertionError("bad initial pair without reachable violation")


def closure_audit(relation: Iterable[PairState], outputs: Iterable[int]) -> int:
    """Count pairs of a claimed witness that violate a condition or leave it."""
    rel = set(relation)
    outputs = tuple(outputs)
    bad = 0
    for p in rel:
        viol, succ = _expand(p, outputs)
        if viol or len(p.left.threads) != len(p.right.threads):
            bad += 1
        elif any(s not in rel for _, s in succ):
            bad += 1
    return bad


# ---------------------------------------------------------------------------
# Whole programs
# ---------------------------------------------------------------------------


def input_assignments(doms: Mapping[str, Sequence[int]]) -> list[dict[str, int]]:
    names = list(doms)
    return [dict(zip(names, combo)) for combo in itertools.product(*(doms[n] for n in names))]


@dataclass
class PairResult:
    left: dict[str, int]
    right: dict[str, int]
    verdict: Verdict

    def to_json(self) -> dict:
        return {"i": self.left, "j": self.right, **self.verdict.to_json()}


_PRECEDENCE = ("Insecure", "Stuck", "BoundExceeded")


@dataclass
class VerdictSummary:
    program: str
    domains: dict[str, tuple[int, ...]]
    pairs: list[PairResult]

    @property
    def overall(self) -> str:
        names = {r.verdict.name for r in self.pairs}
        for name in _PRECEDENCE:
            if name in names:
                return name
        return "Secure"

    @property
    def pairs_explored(self) -> int:
        return sum(r.verdict.pairs_explored for r in self.pairs)

    def first(self, name: str) -> Optional[PairResult]:
        return next((r for r in self.pairs if r.verdict.name == name), None)

    def to_json(self) -> dict:
        return {"program": self.program,
                "domains": {k: list(v) for k, v in self.domains.items()},
                "pairs": [r.to_json() for r in self.pairs],
                "pairs_explored": self.pairs_explored,
                "overall": self.overall,
                "note": "high inputs range over the finite domains listed"}


def decide_inputs(p: Program, left: Mapping[str, int], right: Mapping[str, int],
                  cfg: VerifyConfig = VerifyConfig(),
                  impls: Optional[Mapping[str, Expr]] = None,
                  keep_relation: bool = False) -> Verdict:
    main_l, heap, locs = instantiate(p, left, impls)
    main_r, _, _ = instantiate(p, right, impls)
    return decide_pair(main_l, main_r, heap, locs, cfg, (dict(left), dict(right)),
                       keep_relation)


def _job(args) -> Verdict:
    p, left, right, cfg, impls = args
    return decide_inputs(p, left, right, cfg, impls)


def verify(p: Program, cfg: VerifyConfig = VerifyConfig(), jobs: int = 1,
           impls: Optional[Mapping[str, Expr]] = None) -> VerdictSummary:
    """Decide every ordered pair of input assignments, the diagonal included."""
    doms = cfg.domains_for(p)
    assigns = input_assignments(doms)
    # fail early on missing externs, in the calling process
    instantiate(p, assigns[0], impls)
    tasks = [(p, a, b, cfg, impls) for a in assigns for b in assigns]
    if jobs > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            verdicts = list(pool.map(_job, tasks))
    else:
        verdicts = [_job(t) for t in tasks]
    pairs = [PairResult(t[1], t[2], v) for t, v in zip(tasks, verdicts)]
    return VerdictSummary(p.name, doms, pairs)


def replay(p: Program, trace: CounterTrace,
           impls: Optional[Mapping[str, Expr]] = None) -> tuple[PairState, list[Violation]]:
    """Re-run a counterexample schedule on both sides and re-check the end pair."""
    main_l, heap, locs = instantiate(p, trace.inputs_left, impls)
    main_r, _, _ = instantiate(p, trace.inputs_right, impls)
    pair = PairState(Config((main_l,), heap), Config((main_r,), heap))
    outputs = tuple(locs.values())
    for i in trace.schedule:
        viol, succ = _expand(pair, outputs)
        if viol:
            raise ValueError("schedule runs past a violation")
        nxt = dict(succ)
        if i not in nxt:
            raise ValueError(f"thread {i} cannot step in lock-step")
        pair = nxt[i]
    return pair, pair_conditions(pair, outputs)
