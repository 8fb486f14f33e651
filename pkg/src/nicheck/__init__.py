"""Checking timing-sensitive non-interference for a small concurrent language."""
from __future__ import annotations

__version__ = "0.1.0"
