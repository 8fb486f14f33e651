"""Syntax, parser and printer of the ``.ni`` language."""
from __future__ import annotations

from .parser import ParseError, parse, parse_expr, parse_type, tokenize
from .pretty import pretty, pretty_program, pretty_val
from .program import Program
from .syntax import *  # noqa: F401,F403
from .syntax import __all__ as _syntax_all

__all__ = [
    "ParseError", "parse", "parse_expr", "parse_type", "tokenize",
    "pretty", "pretty_program", "pretty_val", "Program", *_syntax_all,
]
