"""Example programs with their expected typings and verdicts.

Fixtures live in ``programs/*.ni``; ``manifest.ini`` lists them with the
expectations.  ``corpus_run`` re-derives everything and diffs.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional, Sequence

from ..lang.parser import parse
from ..lang.program import Program
from ..lang.syntax import Expr
from ..semantics import MissingImplementation
from ..typecheck import TypingReport, typecheck_program
from ..verifier import Insecure, VerdictSummary, VerifyConfig, replay, verify

HERE = Path(__file__).parent
MANIFEST = HERE / "manifest.ini"
VERDICTS = ("Secure", "Insecure", "Stuck", "BoundExceeded")

__all__ = ["Fixture", "FixtureResult", "CorpusReport", "MissingImplementation", "fixtures",
           "fixture", "link", "check_fixture", "corpus_run", "MANIFEST"]


@dataclass
class Fixture:
    name: str
    source: str
    path: Path
    expected_typing: dict[str, str]   # def name -> type string, or "!Kind"
    expected_verdict: str
    about: str = ""
    harness: str = ""

    @cached_property
    def program(self) -> Program:
        p = parse(self.source)
        p.name = self.name
        return p

    @property
    def domains(self) -> dict[str, tuple[int, ...]]:
        return self.program.domains


def fixtures(manifest: Optional[Path] = None) -> list[Fixture]:
    """All fixtures in manifest order."""
    path = Path(manifest) if manifest is not None else MANIFEST
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep definition names as written
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    out = []
    for name in cp.sections():
        sec = cp[name]
        src_path = path.parent / "programs" / sec.get("file", f"{name}.ni")
        verdict = sec.get("verdict", "Secure")
        if verdict not in VERDICTS:
            raise ValueError(f"{name}: unknown verdict {verdict!r}")
        typing = {k[len("type."):]: v for k, v in sec.items() if k.startswith("type.")}
        out.append(Fixture(name, src_path.read_text(encoding="utf-8"), src_path, typing,
                           verdict, sec.get("about", ""), sec.get("harness", "")))
    return out


def fixture(name: str) -> Fixture:
    for f in fixtures():
        if f.name == name:
            return f
    raise KeyError(name)


def link(f: Fixture, externs: Mapping[str, Expr]) -> Program:
    """The fixture's program with every extern given an implementation.

    Declared extern types are kept, so typechecking is unaffected.
    """
    p = f.program
    impls = dict(p.extern_impls) | dict(externs)
    for name, _ in p.externs:
        if name not in impls:
            raise MissingImplementation(name)
    return dataclasses.replace(p, extern_impls=impls)


# ---------------------------------------------------------------------------
# Checking against expectations
# ---------------------------------------------------------------------------


def typing_mismatches(f: Fixture, report: TypingReport) -> list[str]:
    got = {d.name: d for d in report.entries if not d.extern}
    problems = []
    for name, want in f.expected_typing.items():
        d = got.get(name)
        if d is None:
            problems.append(f"{name}: no such definition")
        elif want.startswith("!"):
            kinds = [e.kind for e in d.errors]
            if want[1:] not in kinds:
                shown = str(d.type) if d.type is not None else ",".join(kinds)
                problems.append(f"{name}: expected {want[1:]}, got {shown}")
        elif d.errors:
            problems.append(f"{name}: expected {want}, got {d.errors[0].kind}")
        elif str(d.type) != want:
            problems.append(f"{name}: expected {want}, got {d.type}")
    for name in got:
        if name not in f.expected_typing:
            problems.append(f"{name}: no expectation recorded")
    return problems


@dataclass
class FixtureResult:
    name: str
    expected_verdict: str
    verdict: str
    typing: TypingReport
    typing_problems: list[str]
    summary: VerdictSummary
    replays: Optional[bool] = None
    audit_violations: int = 0

    @property
    def ok(self) -> bool:
        return (not self.typing_problems and self.verdict == self.expected_verdict
                and self.replays is not False and self.audit_violations == 0)

    @property
    def pairs_explored(self) -> int:
        return self.summary.pairs_explored

    def to_json(self) -> dict:
        insecure = self.summary.first(self.verdict) if self.verdict in ("Insecure", "Stuck") else None
        return {
            "name": self.name,
            "ok": self.ok,
            "expected_verdict": self.expected_verdict,
            "verdict": self.verdict,
            "well_typed": self.typing.ok,
            "typing": {d.name: (str(d.type) if not d.errors else "!" + d.errors[0].kind)
                       for d in self.typing.entries if not d.extern},
            "typing_problems": self.typing_problems,
            "pairs_explored": self.pairs_explored,
            "input_pairs": len(self.summary.pairs),
            "domains": {k: list(v) for k, v in self.summary.domains.items()},
            "trace": None if insecure is None else insecure.verdict.trace.to_json(),
            "replays": self.replays,
            "audit_violations": self.audit_violations,
        }


def check_fixture(f: Fixture, jobs: int = 1, cfg: Optional[VerifyConfig] = None) -> FixtureResult:
    cfg = cfg or VerifyConfig(audit=True)
    p = f.program
    typing = typecheck_program(p)
    summary = verify(p, cfg, jobs=jobs)
    verdict = summary.overall
    replays = None
    hit = summary.first(verdict) if verdict in ("Insecure", "Stuck") else None
    if hit is not None:
        assert isinstance(hit.verdict, Insecure)
        trace = hit.verdict.trace
        _, viols = replay(p, trace)
        replays = any(v.kind == trace.kind for v in viols)
    audit = sum(r.verdict.audit_violations or 0 for r in summary.pairs
                if r.verdict.name == "Secure")
    return FixtureResult(f.name, f.expected_verdict, verdict, typing,
                         typing_mismatches(f, typing), summary, replays, audit)


@dataclass
class CorpusReport:
    results: list[FixtureResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.ok]

    def to_json(self) -> dict:
        return {"fixtures": [r.to_json() for r in self.results], "ok": self.ok,
                "failures": self.failures, "warnings": self.warnings,
                "note": "high inputs range over the finite domains listed per fixture"}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        rows = [("fixture", "expected", "verdict", "typing", "pairs", "status")]
        for r in self.results:
            typing = "ok" if not r.typing_problems else "MISMATCH"
            rows.append((r.name, r.expected_verdict, r.verdict, typing, str(r.pairs_explored),
                         "pass" if r.ok else "FAIL"))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                         for row in rows)


def corpus_run(jobs: int = 1, manifest: Optional[Path] = None,
               only: Optional[Sequence[str]] = None,
               report_dir: Optional[Path] = None) -> CorpusReport:
    """Typecheck and verify every fixture and compare with the manifest."""
    fs = fixtures(manifest)
    if only:
        fs = [f for f in fs if f.name in set(only)]
    report = CorpusReport()
    if not fs:
        report.warnings.append("no fixtures found")
    if jobs > 1 and len(fs) > 1:
        # fixtures are independent; results come back in manifest order
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            report.results.extend(pool.map(check_fixture, fs))
    else:
        report.results.extend(check_fixture(f) for f in fs)
    if report_dir is not None:
        write_report(report, Path(report_dir))
    return report


def write_report(report: CorpusReport, out: Path) -> None:
    import csv

    from ..plots import pairs_explored_chart

    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.json").write_text(report.dumps(), encoding="utf-8")
    with open(out / "corpus.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fixture", "expected", "verdict", "well_typed", "pairs_explored", "ok"])
        for r in report.results:
            w.writerow([r.name, r.expected_verdict, r.verdict, r.typing.ok,
                        r.pairs_explored, r.ok])
    pairs_explored_chart([(r.name, r.pairs_explored, r.verdict) for r in report.results],
                         out / "pairs_explored.png")
