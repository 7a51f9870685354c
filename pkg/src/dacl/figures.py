"""Report figures rendered to PNG files alongside delimited output.

Matplotlib is loaded lazily with the Agg backend so the library never
needs a display; every figure function takes the data plus a destination
path and returns that path.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Tuple

from .audit import CoverageReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def coverage_figure(report: CoverageReport, path: Path) -> Path:
    """Horizontal bars: decision-state coverage fraction per clause."""
    plt = _pyplot()
    names = sorted(report.per_clause)
    fractions = [report.per_clause[n].fraction for n in names]
    labels = [
        f"{n} ({len(report.per_clause[n].hit)}/{len(report.per_clause[n].declared)})"
        for n in names
    ]
    fig, ax = plt.subplots(figsize=(7, 1 + 0.5 * len(names)))
    bars = ax.barh(range(len(names)), fractions, color="#4878b0")
    for bar, fraction in zip(bars, fractions):
        if fraction < 1:
            bar.set_color("#c44e52")
    ax.set_yticks(range(len(names)), labels)
    ax.set_xlim(0, 1)
    ax.set_xlabel("decision states hit")
    ax.set_title(
        f"Coverage {report.hit_total}/{report.state_total} "
        f"({report.fraction:.1%})"
    )
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def concordance_figure(counts: Dict[str, Tuple[int, int]], path: Path) -> Path:
    """Stacked bars of matched / mismatched event counts per group.

    ``counts`` maps a group label (contract id, batch name, ...) to a
    ``(matched, mismatched)`` pair.
    """
    plt = _pyplot()
    labels = sorted(counts)
    matched = [counts[k][0] for k in labels]
    mismatched = [counts[k][1] for k in labels]
    fig, ax = plt.subplots(figsize=(7, 1 + 0.5 * len(labels)))
    ax.barh(range(len(labels)), matched, color="#4878b0", label="matched")
    ax.barh(
        range(len(labels)), mismatched, left=matched, color="#c44e52", label="mismatched"
    )
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("events")
    total_ok = sum(matched)
    total = total_ok + sum(mismatched)
    ax.set_title(f"Concordance {total_ok}/{total}")
    ax.legend(loc="lower right")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
