"""Figures for benchmark reports, rendered headless to image files."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .pipeline import OutcomeStatus, TranslationOutcome

if TYPE_CHECKING:
    from .bench import BenchmarkReport

__all__ = ["render_report_figures"]


def render_report_figures(
    report: "BenchmarkReport",
    outcomes: list[TranslationOutcome],
    out_dir: str | Path,
) -> list[Path]:
    """Render the report's figures into out_dir, returning the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        _success_rate_chart(report, out_dir / "success_rate.png"),
        _attempts_histogram(outcomes, out_dir / "attempts.png"),
    ]
    return paths


def _success_rate_chart(report: "BenchmarkReport", path: Path) -> Path:
    pairs = list(report.per_pair)
    rates = [report.per_pair[p]["success_rate"] for p in pairs]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(pairs) + 2), 3.5))
    bars = ax.bar(pairs, rates, color="#4878a8")
    ax.set_ylim(0, 100)
    ax.set_ylabel("success rate (%)")
    ax.set_title(f"{report.name}: success rate by language pair")
    ax.bar_label(bars, fmt="%.1f")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _attempts_histogram(outcomes: list[TranslationOutcome], path: Path) -> Path:
    ok = [
        o.attempts_used for o in outcomes if o.status is OutcomeStatus.SUCCESS
    ]
    failed = [
        o.attempts_used for o in outcomes if o.status is not OutcomeStatus.SUCCESS
    ]
    top = max([*ok, *failed, 1])
    bins = [i + 0.5 for i in range(top + 1)]
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.hist(
        [ok, failed],
        bins=bins,
        stacked=True,
        color=["#4878a8", "#b85450"],
        label=["converged", "failed"],
    )
    ax.set_xlabel("attempts used")
    ax.set_ylabel("tasks")
    ax.set_title("attempt spread")
    ax.set_xticks(range(1, top + 1))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
