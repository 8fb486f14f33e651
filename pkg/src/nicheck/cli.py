"""``nicheck`` command line.

Exit codes: 0 Secure (or success), 1 Insecure (or type error, corpus
mismatch), 2 Stuck, 3 BoundExceeded (or fuel exhausted), 4 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .lang.parser import ParseError, parse
from .lang.pretty import pretty, pretty_program
from .lang.program import Program
from .semantics import DEFAULT_FUEL, FuelExhausted, MissingImplementation, StuckReport, run
from .typecheck import typecheck_program
from .verifier import VerifyConfig, verify

EXIT = {"Secure": 0, "Insecure": 1, "Stuck": 2, "BoundExceeded": 3}
USAGE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def _color(text: str, code: str, stream) -> str:
    if os.environ.get("NI_COLOR") == "0" or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\x1b[{code}m{text}\x1b[0m"


_VERDICT_COLOR = {"Secure": "32", "Insecure": "31", "Stuck": "33", "BoundExceeded": "90"}


def parse_domain(spec: str) -> tuple[str, tuple[int, ...]]:
    """``h=0..3`` or ``h=0,1,5``."""
    name, sep, rng = spec.partition("=")
    if not sep or not name.strip():
        raise UsageError(f"bad domain {spec!r}; expected NAME=LO..HI or NAME=A,B")
    try:
        if ".." in rng:
            lo, hi = (int(x) for x in rng.split(".."))
            if hi < lo:
                raise ValueError
            vals = tuple(range(lo, hi + 1))
        else:
            vals = tuple(int(x) for x in rng.split(","))
    except ValueError:
        raise UsageError(f"bad domain {spec!r}") from None
    return name.strip(), vals


def parse_input(spec: str) -> tuple[str, int]:
    name, sep, val = spec.partition("=")
    try:
        if not sep:
            raise ValueError
        return name.strip(), int(val)
    except ValueError:
        raise UsageError(f"bad input {spec!r}; expected NAME=INT") from None


def load_program(arg: str) -> Program:
    """A ``.ni`` file, or the name of a corpus fixture when no such file exists."""
    path = Path(arg)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        from .corpus import fixtures

        known = {f.name: f for f in fixtures()}
        if path.stem not in known:
            raise UsageError(f"no such file or fixture: {arg}")
        text = known[path.stem].source
    p = parse(text)
    p.name = path.stem
    return p


def _emit(args, payload: dict, human: str) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if getattr(args, "report", None):
        Path(args.report).write_text(text, encoding="utf-8")
    if args.format == "json":
        sys.stdout.write(text)
    else:
        sys.stdout.write(human.rstrip("\n") + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    p = load_program(args.file)
    payload = {"program": p.name, "outputs": p.outputs,
               "highs": {h: list(d) for h, d in p.highs},
               "externs": {n: str(t) for n, t in p.externs},
               "defs": {n: pretty(e) for n, e in p.defs},
               "main": pretty(p.main)}
    _emit(args, payload, pretty_program(p))
    return 0


def cmd_typecheck(args) -> int:
    p = load_program(args.file)
    rep = typecheck_program(p)
    lines = []
    for d in rep.entries:
        if d.errors:
            for err in d.errors:
                lines.append(f"{d.name}: " + _color(str(err), "31", sys.stdout))
        else:
            tag = " (extern)" if d.extern else ""
            lines.append(f"{d.name} : {d.type}{tag}")
    for err in rep.errors:
        print(f"{p.name}: {err}", file=sys.stderr)
    _emit(args, rep.to_json(), "\n".join(lines))
    return 0 if rep.ok else 1


def cmd_run(args) -> int:
    p = load_program(args.file)
    given = dict(parse_input(s) for s in args.input)
    unknown = set(given) - set(p.high_names)
    if unknown:
        raise UsageError(f"no high input named {sorted(unknown)[0]!r}")
    # unspecified highs take the first value of their declared domain
    inputs = {h: given.get(h, dom[0]) for h, dom in p.highs}
    if args.sched == "random" and args.seed is None:
        raise UsageError("--sched random requires --seed")
    if args.fuel <= 0:
        raise UsageError("--fuel must be positive")
    code = 0
    try:
        rep = run(p, inputs, args.sched, args.fuel, args.seed)
        status = "value"
    except StuckReport as exc:
        rep, status, code = exc.report, f"stuck: thread {exc.index}: {exc.reason}", EXIT["Stuck"]
        print(f"{p.name}: {status}", file=sys.stderr)
    except FuelExhausted as exc:
        rep, status, code = exc.report, "fuel exhausted", EXIT["BoundExceeded"]
        print(f"{p.name}: {exc}", file=sys.stderr)
    payload = rep.to_json() | {"inputs": inputs, "status": status.split(":")[0]}
    human = [f"inputs: {inputs}", f"status: {status}",
             f"value: {payload['value']}", f"outputs: {rep.outputs}", f"steps: {rep.steps}"]
    _emit(args, payload, "\n".join(human))
    return code


def _verify_config(args) -> VerifyConfig:
    doms = dict(parse_domain(s) for s in args.domain)
    if args.max_pairs <= 0 or args.max_depth <= 0:
        raise UsageError("bounds must be positive")
    return VerifyConfig(domains=doms or None, max_pairs=args.max_pairs,
                        max_depth=args.max_depth, timeout=args.timeout, audit=args.audit)


def cmd_verify(args) -> int:
    p = load_program(args.file)
    cfg = _verify_config(args)
    try:
        cfg.domains_for(p)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0])) from None
    summary = verify(p, cfg, jobs=args.jobs)
    overall = summary.overall
    lines = [f"{p.name}: " + _color(overall, _VERDICT_COLOR[overall], sys.stdout),
             f"domains: {dict(summary.domains)}",
             f"input pairs: {len(summary.pairs)}, pairs explored: {summary.pairs_explored}"]
    hit = summary.first(overall) if overall != "Secure" else None
    if hit is not None:
        v = hit.verdict
        lines.append(f"first: {hit.left} vs {hit.right}")
        if hasattr(v, "trace"):
            lines.append(f"violation: {v.trace.kind}: {v.trace.detail}")
            lines.append(f"schedule: {v.trace.schedule}")
        else:
            lines.append(f"bound: {v.bound} = {v.value}")
    _emit(args, summary.to_json(), "\n".join(lines))
    return EXIT[overall]


def cmd_corpus(args) -> int:
    from .corpus import corpus_run

    report = corpus_run(jobs=args.jobs, manifest=args.manifest, only=args.only or None,
                        report_dir=args.report)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for r in report.results:
        if not r.ok:
            why = r.typing_problems or [f"verdict {r.verdict}, expected {r.expected_verdict}"]
            print(f"FAIL {r.name}: {'; '.join(why)}", file=sys.stderr)
    if args.format == "json":
        sys.stdout.write(report.dumps())
    else:
        sys.stdout.write(report.table() + "\n")
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nicheck", description="Timing-sensitive non-interference checker.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, report_help="also write the JSON report to this file"):
        sp.add_argument("--format", choices=("human", "json"), default="human")
        sp.add_argument("--report", metavar="PATH", help=report_help)

    sp = sub.add_parser("parse", help="parse and pretty-print a program")
    sp.add_argument("file")
    common(sp)
    sp.set_defaults(fn=cmd_parse)

    sp = sub.add_parser("typecheck", help="security-typecheck a program")
    sp.add_argument("file")
    common(sp)
    sp.set_defaults(fn=cmd_typecheck)

    sp = sub.add_parser("run", help="run a program under a scheduler")
    sp.add_argument("file")
    sp.add_argument("--input", action="append", default=[], metavar="NAME=INT")
    sp.add_argument("--sched", choices=("rr", "random"), default="rr")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("verify", help="decide strong low-bisimilarity over input pairs")
    sp.add_argument("file")
    sp.add_argument("--domain", action="append", default=[], metavar="NAME=LO..HI")
    sp.add_argument("--max-pairs", type=int, default=VerifyConfig.max_pairs)
    sp.add_argument("--max-depth", type=int, default=VerifyConfig.max_depth)
    sp.add_argument("--timeout", type=float, help="seconds per input pair")
    sp.add_argument("--audit", action="store_true", help="re-check the explored relation")
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("corpus", help="check every fixture against its expectations")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--manifest", type=Path)
    sp.add_argument("--only", nargs="*", metavar="NAME")
    common(sp, "directory for corpus.json, corpus.csv and pairs_explored.png")
    sp.set_defaults(fn=cmd_corpus)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        ap.error("--jobs must be at least 1")
    try:
        return args.fn(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"nicheck: error: {exc}", file=sys.stderr)
        return USAGE
    except ParseError as exc:
        print(f"{args.file}: parse error: {exc}", file=sys.stderr)
        return USAGE
    except MissingImplementation as exc:
        print(f"nicheck: error: {exc}", file=sys.stderr)
        return USAGE
    except OSError as exc:
        print(f"nicheck: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
