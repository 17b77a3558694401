"""Prompt assembly from slotted templates.

Templates are plain text with {{SLOT}} markers plus a JSON sidecar naming
the template and its system-role header. Substitution happens in a single
pass over the template, so slot values are spliced as opaque data and can
never introduce new markers. A translation prompt must not reference the
feedback slots; refinement prompts exist for that.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .agents import AgentVerdict, Hint, HintKind, HintPolarity, Verdict
from .compilers import CompileResult, Diagnostic, Severity
from .errors import ConfigError, SlotMismatchError, ValidationError
from .gateway import ChatMessage

SLOT_SOURCE_LANG = "SOURCE_LANG"
SLOT_TARGET_LANG = "TARGET_LANG"
SLOT_SOURCE_CODE = "SOURCE_CODE"
SLOT_BLUEPRINT = "BLUEPRINT"
SLOT_HINTS = "HINTS"
SLOT_FEW_SHOTS = "FEW_SHOTS"
SLOT_PREVIOUS_OUTPUT = "PREVIOUS_OUTPUT"

KNOWN_SLOTS = frozenset(
    {
        SLOT_SOURCE_LANG,
        SLOT_TARGET_LANG,
        SLOT_SOURCE_CODE,
        SLOT_BLUEPRINT,
        SLOT_HINTS,
        SLOT_FEW_SHOTS,
        SLOT_PREVIOUS_OUTPUT,
    }
)

FEEDBACK_SLOTS = frozenset({SLOT_HINTS, SLOT_PREVIOUS_OUTPUT})

FEW_SHOT_CAP = 3

_SLOT_RE = re.compile(r"\{\{([A-Z_]+)\}\}")

# Hint groups render in this order; positive guidance reads best first.
_POLARITY_ORDER = (
    (HintPolarity.POSITIVE_EXAMPLE, "Follow these examples:"),
    (HintPolarity.NEGATIVE_EXAMPLE, "Avoid these problems:"),
    (HintPolarity.INSTRUCTION, "Instructions:"),
)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    role_header: str
    body: str

    def __post_init__(self):
        if not self.template_id:
            raise ValidationError("template_id must be non-empty")
        unknown = self.slots() - KNOWN_SLOTS
        if unknown:
            raise ValidationError(
                f"template {self.template_id!r} references unknown slots: "
                f"{sorted(unknown)}"
            )

    def slots(self) -> set[str]:
        return set(_SLOT_RE.findall(self.body))

    def render(self, values: dict[str, str]) -> str:
        """One-pass splice; every referenced slot must have a value."""
        missing = self.slots() - set(values)
        if missing:
            raise SlotMismatchError(
                f"template {self.template_id!r} needs values for "
                f"{sorted(missing)}"
            )
        return _SLOT_RE.sub(lambda m: values[m.group(1)], self.body)


@dataclass(frozen=True)
class FewShotExample:
    source_lang: str
    target_lang: str
    source_code: str
    target_code: str
    note: str | None = None


def load_template(path: str | Path) -> PromptTemplate:
    """Read body from a text file and metadata from its .json sidecar."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        body = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"template file not found: {path}") from None
    try:
        meta = json.loads(sidecar.read_text())
    except FileNotFoundError:
        raise ConfigError(f"template sidecar not found: {sidecar}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{sidecar}: invalid JSON: {exc}") from None
    return PromptTemplate(
        template_id=meta.get("template_id", path.stem),
        role_header=meta.get("role_header", ""),
        body=body,
    )


def _data_template(stem: str) -> PromptTemplate:
    here = Path(__file__).parent / "data" / "templates"
    return load_template(here / f"{stem}.txt")


def default_translation_template() -> PromptTemplate:
    return _data_template("translate")


def default_refinement_template() -> PromptTemplate:
    return _data_template("refine")


def render_few_shots(shots: Sequence[FewShotExample]) -> str:
    if not shots:
        return ""
    parts = ["Worked examples:"]
    for shot in shots[:FEW_SHOT_CAP]:
        block = (
            f"Example ({shot.source_lang} -> {shot.target_lang}):\n"
            f"Source:\n```\n{shot.source_code}\n```\n"
            f"Target:\n```\n{shot.target_code}\n```"
        )
        if shot.note:
            block += f"\nNote: {shot.note}"
        parts.append(block)
    return "\n\n".join(parts)


def render_hints(hints: Sequence[Hint], diagnostics: Sequence[Diagnostic]) -> str:
    """Numbered diagnostics first, then hints grouped by polarity."""
    sections = []
    if diagnostics:
        lines = ["Compiler diagnostics:"]
        for i, d in enumerate(diagnostics, start=1):
            location = d.file or "<output>"
            lines.append(
                f"{i}. [{d.severity.value}] {location}:{d.line}:{d.column} "
                f"{d.message}"
            )
        sections.append("\n".join(lines))
    for polarity, heading in _POLARITY_ORDER:
        group = [h for h in hints if h.polarity is polarity]
        if not group:
            continue
        lines = [heading]
        for hint in group:
            line = f"- ({hint.kind.value}) {hint.message}"
            if hint.snippet:
                line += f"\n  e.g. {hint.snippet}"
            lines.append(line)
        sections.append("\n".join(lines))
    return "\n\n".join(sections)


def build_translation_prompt(
    task,
    blueprint: str | None = None,
    shots: Sequence[FewShotExample] = (),
    template: PromptTemplate | None = None,
) -> tuple[ChatMessage, ChatMessage]:
    """First-attempt prompt: system header plus rendered body.

    task provides source_lang, target_lang, and source_code. Feedback slots
    are rejected here; there is no previous output to feed back yet. Shots
    for a different language pair are a caller bug, not data to silently
    drop.
    """
    template = template or default_translation_template()
    forbidden = template.slots() & FEEDBACK_SLOTS
    if forbidden:
        raise SlotMismatchError(
            f"translation template {template.template_id!r} references "
            f"feedback slots {sorted(forbidden)}"
        )
    for shot in shots:
        if (shot.source_lang, shot.target_lang) != (
            task.source_lang,
            task.target_lang,
        ):
            raise ValidationError(
                f"few-shot pair {shot.source_lang}->{shot.target_lang} does "
                f"not match task pair {task.source_lang}->{task.target_lang}"
            )
    body = template.render(
        {
            SLOT_SOURCE_LANG: task.source_lang,
            SLOT_TARGET_LANG: task.target_lang,
            SLOT_SOURCE_CODE: task.source_code,
            SLOT_BLUEPRINT: blueprint or "(not available)",
            SLOT_FEW_SHOTS: render_few_shots(shots),
        }
    )
    return (
        ChatMessage(role="system", content=template.role_header),
        ChatMessage(role="user", content=body),
    )


def derive_hints(
    compile_result: CompileResult | None,
    verdicts: Sequence[AgentVerdict] = (),
) -> tuple[Hint, ...]:
    """Collect actionable feedback from one verification round.

    Compiler errors come first as direct instructions, then every hint
    carried on a failing agent verdict, in verdict order. Duplicates by
    (kind, message) collapse to the first occurrence.
    """
    collected: list[Hint] = []
    if compile_result is not None:
        for d in compile_result.diagnostics:
            if d.severity is not Severity.ERROR:
                continue
            location = f"{d.file}:{d.line}:{d.column}" if d.file else "output"
            collected.append(
                Hint(
                    kind=HintKind.COMPILER_DIRECTED,
                    message=f"fix {location}: {d.message}",
                    polarity=HintPolarity.INSTRUCTION,
                )
            )
    for verdict in verdicts:
        if verdict.verdict is Verdict.FAIL:
            collected.extend(verdict.hints)
    seen: set[tuple] = set()
    unique = []
    for hint in collected:
        key = (hint.kind, hint.message)
        if key in seen:
            continue
        seen.add(key)
        unique.append(hint)
    return tuple(unique)


def build_refinement_prompt(
    task,
    previous_output: str,
    hints: Sequence[Hint],
    diagnostics: Sequence[Diagnostic] = (),
    template: PromptTemplate | None = None,
) -> tuple[ChatMessage, ChatMessage]:
    """Feedback prompt for another try with the same model.

    Requires something to say: at least one hint or diagnostic.
    """
    if not hints and not diagnostics:
        raise ValidationError("refinement prompt needs hints or diagnostics")
    template = template or default_refinement_template()
    body = template.render(
        {
            SLOT_SOURCE_LANG: task.source_lang,
            SLOT_TARGET_LANG: task.target_lang,
            SLOT_SOURCE_CODE: task.source_code,
            SLOT_BLUEPRINT: "(not available)",
            SLOT_FEW_SHOTS: "",
            SLOT_PREVIOUS_OUTPUT: previous_output,
            SLOT_HINTS: render_hints(hints, diagnostics),
        }
    )
    return (
        ChatMessage(role="system", content=template.role_header),
        ChatMessage(role="user", content=body),
    )
