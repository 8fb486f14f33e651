"""Corpus report chart."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_COLORS = {"Secure": "#4c8c4a", "Insecure": "#b5452f", "Stuck": "#c98b2b",
           "BoundExceeded": "#777777"}


def pairs_explored_chart(rows: Sequence[tuple[str, int, str]], path: Path) -> Path:
    """Horizontal bars of product pairs explored per fixture (log scale)."""
    names = [r[0] for r in rows]
    counts = [max(r[1], 1) for r in rows]
    colors = [_COLORS.get(r[2], "#777777") for r in rows]
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(rows) + 1.2))
    ax.barh(range(len(rows)), counts, color=colors)
    ax.set_yticks(range(len(rows)), names)
    ax.invert_yaxis()
    ax.set_xscale("log")
    ax.set_xlabel("pairs explored (all input pairs)")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in _COLORS.values()]
    ax.legend(handles, list(_COLORS), loc="lower right", fontsize="small")
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
