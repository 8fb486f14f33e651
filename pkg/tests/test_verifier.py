from __future__ import annotations

import pytest

from nicheck.corpus import fixture, link
from nicheck.lang.parser import parse
from nicheck.lang.syntax import Fork, IntV, Lit, Load, LocV
from nicheck.semantics import Config, Heap, MissingImplementation, instantiate, pool_step
from nicheck.verifier import (
    BoundExceeded, Insecure, PairState, Secure, Stuck, VerifyConfig, closure_audit,
    decide_inputs, decide_pair, decide_pair_gfp, pair_conditions, product_successors, replay,
    verify,
)

OUT = 0


def lit(n):
    return Lit(IntV(n))


def pair(lt, rt, lh=None, rh=None):
    lh = Heap({OUT: IntV(0)}) if lh is None else lh
    rh = Heap({OUT: IntV(0)}) if rh is None else rh
    return PairState(Config(tuple(lt), lh), Config(tuple(rt), rh))


def kinds(p):
    return [v.kind for v in pair_conditions(p, [OUT])]


def test_pair_conditions_examples():
    assert kinds(pair([lit(5)], [lit(5)])) == []
    assert kinds(pair([lit(0)], [lit(1)])) == ["MainValueMismatch"]
    assert kinds(pair([lit(5)], [lit(5)], rh=Heap({OUT: IntV(1)}))) == ["LowHeapMismatch"]


def test_one_sided_termination_and_thread_counts():
    e = parse("1 + 1").main
    assert kinds(pair([lit(2)], [e]))[0] == "MainValueMismatch"
    assert "StepMismatch" in kinds(pair([lit(2), lit(0)], [lit(2)]))
    assert kinds(pair([lit(2), e], [lit(2), lit(3)])) == ["StepMismatch"]


def test_stuck_thread():
    bad = parse("1 + true").main
    assert kinds(pair([bad], [bad])) == ["StuckThread"]


def test_successors():
    p = pair([Fork(lit(1))], [Fork(lit(1))])
    succ = product_successors(p)
    assert len(succ) == 1
    assert len(succ[0][1].left.threads) == len(succ[0][1].right.threads) == 2
    single = parse("1 + 2").main
    assert len(product_successors(pair([single], [single]))) == 1
    assert product_successors(pair([lit(1)], [lit(1)])) == []


def test_rand_secure():
    s = verify(fixture("rand").program)
    assert s.overall == "Secure" and len(s.pairs) == 1


def test_rand_bad_trace_runs_secret_write_last():
    p = fixture("rand_bad").program
    v = decide_inputs(p, {"h": 0}, {"h": 1})
    assert isinstance(v, Insecure) and v.trace.kind == "MainValueMismatch"
    sched = v.trace.schedule
    assert sched[-1] == 0
    others = [i for i in sched if i != 0]
    # the forked secret-dependent write (thread 1) runs, the benign one never does
    assert others and set(others) == {1}


def test_unallocated_load_is_stuck():
    e = Load(Lit(LocV(9)))
    v = decide_pair(e, e, Heap(), {})
    assert isinstance(v, Stuck) and "unallocated" in v.trace.detail
    assert verify(parse("1 2")).overall == "Stuck"


def test_diagonal_secure_for_deterministic_programs():
    p = parse("output o; high h : {0,1,2}; o <- h * 2; !o + h")
    s = verify(p)
    for r in s.pairs:
        if r.left == r.right:
            assert r.verdict.name == "Secure"
    assert s.overall == "Insecure"


@pytest.mark.parametrize("name", ["rand_bad", "p1", "p2", "awk", "direct_leak", "spinlock"])
def test_symmetry(name):
    s = verify(fixture(name).program)
    by = {(tuple(r.left.items()), tuple(r.right.items())): r.verdict.name for r in s.pairs}
    for (a, b), verdict in by.items():
        assert by[(b, a)] == verdict


@pytest.mark.parametrize("name", ["rand", "rand_bad", "p1", "p2", "p3", "direct_leak", "awk",
                                  "awk_bad"])
def test_bfs_agrees_with_greatest_fixpoint(name):
    p = fixture(name).program
    doms = p.domains
    hs = list(doms)
    left = {h: doms[h][0] for h in hs}
    right = {h: doms[h][-1] for h in hs}
    v = decide_inputs(p, left, right)
    main_l, heap, locs = instantiate(p, left)
    main_r, _, _ = instantiate(p, right)
    good, dist = decide_pair_gfp(main_l, main_r, heap, locs)
    assert good == isinstance(v, Secure)
    if not good:
        assert len(v.trace.schedule) == dist


@pytest.mark.parametrize("name", ["rand_bad", "thread2_bad", "awk_bad", "p1", "direct_leak"])
def test_traces_replay(name):
    p = fixture(name).program
    s = verify(p)
    hit = s.first("Insecure")
    trace = hit.verdict.trace
    end, viols = replay(p, trace)
    assert trace.kind in [v.kind for v in viols]
    # replaying with plain pool_step on each side reaches the same pair
    main_l, heap, _ = instantiate(p, trace.inputs_left)
    main_r, _, _ = instantiate(p, trace.inputs_right)
    cl, cr = Config((main_l,), heap), Config((main_r,), heap)
    for i in trace.schedule:
        cl, cr = pool_step(cl, i), pool_step(cr, i)
    assert PairState(cl, cr) == end


def test_closure_audit_on_relation_and_after_tampering():
    p = fixture("awk").program
    v = decide_inputs(p, {"v": 0}, {"v": 1}, VerifyConfig(audit=True), keep_relation=True)
    assert isinstance(v, Secure) and v.audit_violations == 0
    _, _, locs = instantiate(p, {"v": 0})
    rel = set(v.relation)
    assert closure_audit(rel, locs.values()) == 0
    rel.pop()
    assert closure_audit(rel, locs.values()) > 0


def test_bounds():
    p = fixture("prog").program
    v = decide_inputs(p, {"secret": 0}, {"secret": 1}, VerifyConfig(max_pairs=50))
    assert isinstance(v, BoundExceeded) and v.bound == "max_pairs"
    v = decide_inputs(p, {"secret": 0}, {"secret": 1}, VerifyConfig(max_depth=5))
    assert isinstance(v, BoundExceeded) and v.bound == "max_depth"
    v = decide_inputs(p, {"secret": 0}, {"secret": 1}, VerifyConfig(timeout=0.0))
    assert isinstance(v, BoundExceeded) and v.bound == "timeout"


def test_domains_override_and_errors():
    p = fixture("awk").program
    s = verify(p, VerifyConfig(domains={"v": (0, 1, 2)}))
    assert len(s.pairs) == 9 and s.overall == "Secure"
    with pytest.raises(KeyError):
        verify(p, VerifyConfig(domains={"nope": (0,)}))
    with pytest.raises(ValueError):
        verify(p, VerifyConfig(domains={"v": ()}))


def test_verify_is_deterministic_and_parallel_matches():
    p = fixture("thread2_bad").program
    a = verify(p).to_json()
    b = verify(p, jobs=2).to_json()
    assert a == b


def test_missing_extern_implementation():
    p = parse("extern f : (int^L -> int^L)^L; f 1")
    with pytest.raises(MissingImplementation):
        verify(p)
    f = fixture("rand")
    assert link(f, {}) == f.program


def test_link_supplies_externs():
    from nicheck.corpus import Fixture
    from nicheck.lang.parser import parse_expr
    src = "extern f : (int^L -> int^L)^L; f 1"
    fx = Fixture("tmp", src, None, {}, "Secure")
    with pytest.raises(MissingImplementation):
        link(fx, {})
    linked = link(fx, {"f": parse_expr("fun (x: int^L) => x + 1")})
    assert verify(linked).overall == "Secure"
    assert linked.externs == fx.program.externs


def test_verdict_json():
    s = verify(fixture("direct_leak").program)
    js = s.to_json()
    assert js["overall"] == "Insecure"
    assert {"i", "j", "verdict", "pairs_explored"} <= set(js["pairs"][1])
    assert js["pairs"][1]["trace"]["kind"] == "LowHeapMismatch"


def test_stuck_verdict_class():
    v = decide_pair(parse("1 2").main, parse("1 2").main, Heap(), {})
    assert isinstance(v, Stuck) and v.name == "Stuck" and v.trace.kind == "StuckThread"
