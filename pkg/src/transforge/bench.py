"""Benchmark harness: run a manifest of translation tasks, write a report.

A manifest names the entries; each entry becomes one translation task
with its own ledger under out_dir/ledgers/. The report aggregates per
language pair and carries the config digest so numbers stay traceable.
Figures and a delimited copy of the table land next to the JSON report.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, TransforgeError, ValidationError
from .ledger import FileLedger
from .metrics import codebleu_lite, success_rate
from .pipeline import (
    ConvergenceMode,
    EngineDeps,
    OutcomeStatus,
    TranslationOutcome,
    TranslationTask,
    translate,
)

__all__ = [
    "BenchmarkEntry",
    "BenchmarkManifest",
    "BenchmarkReport",
    "load_manifest",
    "run_benchmark",
    "format_summary_table",
]


@dataclass(frozen=True)
class BenchmarkEntry:
    entry_id: str
    source_lang: str
    target_lang: str
    source_path: Path
    reference_path: Path | None = None
    tests_path: Path | None = None


@dataclass(frozen=True)
class BenchmarkManifest:
    name: str
    entries: tuple[BenchmarkEntry, ...]


@dataclass(frozen=True)
class BenchmarkReport:
    name: str
    per_pair: dict
    totals: dict
    config_digest: str

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "per_pair": self.per_pair,
            "totals": self.totals,
            "config_digest": self.config_digest,
        }


def load_manifest(path: str | Path) -> BenchmarkManifest:
    """Load a manifest and check every referenced file up front.

    A missing file fails the load; nothing should start running only to
    die on entry 7 of 10.
    """
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"manifest file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ValidationError(f"{path}: manifest needs an 'entries' list")

    entries = []
    seen: set[str] = set()
    for raw in doc["entries"]:
        try:
            entry_id = raw["entry_id"]
            entry = BenchmarkEntry(
                entry_id=entry_id,
                source_lang=raw["source_lang"],
                target_lang=raw["target_lang"],
                source_path=base / raw["source_path"],
                reference_path=(
                    base / raw["reference_path"] if raw.get("reference_path") else None
                ),
                tests_path=base / raw["tests_path"] if raw.get("tests_path") else None,
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: bad manifest entry: {exc}") from None
        if entry_id in seen:
            raise ValidationError(f"{path}: duplicate entry_id {entry_id!r}")
        seen.add(entry_id)
        for role, ref in (
            ("source", entry.source_path),
            ("reference", entry.reference_path),
            ("tests", entry.tests_path),
        ):
            if ref is not None and not ref.is_file():
                raise ValidationError(
                    f"{path}: entry {entry_id!r}: {role} file not found: {ref}"
                )
        entries.append(entry)
    return BenchmarkManifest(name=doc.get("name", path.stem), entries=tuple(entries))


def _run_entry(
    entry: BenchmarkEntry,
    deps: EngineDeps,
    convergence: ConvergenceMode,
    max_attempts: int,
    ledger_dir: Path,
) -> TranslationOutcome:
    task = TranslationTask(
        task_id=entry.entry_id,
        source_lang=entry.source_lang,
        target_lang=entry.target_lang,
        source_code=entry.source_path.read_text(),
        max_attempts=max_attempts,
        convergence=convergence,
    )
    ledger_path = ledger_dir / f"{entry.entry_id}.jsonl"
    with FileLedger(entry.entry_id, ledger_path) as ledger:
        try:
            outcome = translate(task, deps, ledger)
        except TransforgeError:
            # translate handles the known infra failures itself; anything
            # beyond that still counts as attempted-but-failed here.
            outcome = TranslationOutcome(
                status=OutcomeStatus.FAILED_INFRA, attempts_used=0
            )
    return TranslationOutcome(
        status=outcome.status,
        attempts_used=outcome.attempts_used,
        final_code=outcome.final_code,
        ledger_path=str(ledger_path),
    )


def _mean_codebleu(
    pairs: list[tuple[BenchmarkEntry, TranslationOutcome]], target_lang: str
) -> float | None:
    scores = []
    for entry, outcome in pairs:
        if entry.reference_path is None or outcome.final_code is None:
            continue
        scores.append(
            codebleu_lite(
                outcome.final_code, entry.reference_path.read_text(), target_lang
            )
        )
    if not scores:
        return None
    return round(sum(scores) / len(scores), 4)


def run_benchmark(
    manifest: BenchmarkManifest,
    deps: EngineDeps,
    out_dir: str | Path,
    *,
    workers: int = 4,
    convergence: ConvergenceMode = ConvergenceMode.COMPILE_AND_AGENTS,
    max_attempts: int = 5,
    config_digest: str = "",
    render_figures: bool = True,
    echo=print,
) -> BenchmarkReport:
    """Run every manifest entry and write report, ledgers, and figures.

    Entries run on a bounded worker pool; report assembly happens after
    the last one finishes. Failures of individual entries go into the
    numbers, they do not abort the run.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    out_dir = Path(out_dir)
    ledger_dir = out_dir / "ledgers"
    ledger_dir.mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_entry, e, deps, convergence, max_attempts, ledger_dir)
            for e in manifest.entries
        ]
        outcomes = [f.result() for f in futures]

    by_pair: dict[tuple[str, str], list[tuple[BenchmarkEntry, TranslationOutcome]]] = {}
    for entry, outcome in zip(manifest.entries, outcomes):
        by_pair.setdefault((entry.source_lang, entry.target_lang), []).append(
            (entry, outcome)
        )

    per_pair = {}
    for (src, tgt), pairs in sorted(by_pair.items()):
        pair_outcomes = [o for _, o in pairs]
        succeeded = sum(1 for o in pair_outcomes if o.status is OutcomeStatus.SUCCESS)
        per_pair[f"{src}->{tgt}"] = {
            "attempted": len(pair_outcomes),
            "succeeded": succeeded,
            "success_rate": success_rate(pair_outcomes),
            "mean_codebleu": _mean_codebleu(pairs, tgt),
        }

    succeeded_total = sum(
        1 for o in outcomes if o.status is OutcomeStatus.SUCCESS
    )
    totals = {
        "attempted": len(outcomes),
        "succeeded": succeeded_total,
        "success_rate": success_rate(outcomes) if outcomes else 0.0,
    }
    report = BenchmarkReport(
        name=manifest.name,
        per_pair=per_pair,
        totals=totals,
        config_digest=config_digest,
    )

    (out_dir / "report.json").write_text(
        json.dumps(report.to_doc(), indent=2) + "\n"
    )
    _write_csv(report, out_dir / "report.csv")
    if render_figures:
        from .figures import render_report_figures

        render_report_figures(report, outcomes, out_dir / "figures")
    echo(format_summary_table(report))
    return report


def _write_csv(report: BenchmarkReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["pair", "attempted", "succeeded", "success_rate", "mean_codebleu"]
        )
        for pair, stats in report.per_pair.items():
            writer.writerow(
                [
                    pair,
                    stats["attempted"],
                    stats["succeeded"],
                    stats["success_rate"],
                    "" if stats["mean_codebleu"] is None else stats["mean_codebleu"],
                ]
            )
        writer.writerow(
            [
                "TOTAL",
                report.totals["attempted"],
                report.totals["succeeded"],
                report.totals["success_rate"],
                "",
            ]
        )


def format_summary_table(report: BenchmarkReport) -> str:
    """Plain-text per-pair table: language pair, samples, success rate."""
    rows = [("Language Pair", "Samples", "Success Rate")]
    for pair, stats in report.per_pair.items():
        rows.append((pair, str(stats["attempted"]), f"{stats['success_rate']}%"))
    rows.append(
        (
            "TOTAL",
            str(report.totals["attempted"]),
            f"{report.totals['success_rate']}%",
        )
    )
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
