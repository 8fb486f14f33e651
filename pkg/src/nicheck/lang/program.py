from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .syntax import Expr, Span


@dataclass
class Program:
    """A parsed ``.ni`` file.

    ``highs`` pairs each high input with its finite verification domain.
    ``extern_impls`` holds the bodies of externs that carry one; the checker
    never looks at them, the verifier links them in.
    """

    outputs: list[str] = field(default_factory=list)
    highs: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    externs: list[tuple[str, object]] = field(default_factory=list)
    defs: list[tuple[str, Expr]] = field(default_factory=list)
    main: Optional[Expr] = None
    extern_impls: dict[str, Expr] = field(default_factory=dict)
    spans: dict[str, Span] = field(default_factory=dict, compare=False, repr=False)
    name: str = field(default="<program>", compare=False)

    @property
    def high_names(self) -> list[str]:
        return [h for h, _ in self.highs]

    @property
    def domains(self) -> dict[str, tuple[int, ...]]:
        return dict(self.highs)
