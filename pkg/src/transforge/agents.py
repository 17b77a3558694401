"""Verification agents that judge a translation from different angles.

Five agent kinds run as one batch per attempt: an explainer narrates the
translated program, a fact checker tests the explanation's claims against a
curated fact base with rule-based entailment, a concept verifier compares
the source's conceptual blueprint against the translation, a test generator
drafts runnable checks, and an artifact linter hunts for mechanical
translation pitfalls (leaked source syntax, deleted logic, known-bad API
carryover).

A batch never aborts: an agent that crashes contributes an UNCERTAIN verdict
and the rest still run. The batch passes when no verdict is FAIL.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .codeblocks import fenced_blocks
from .errors import ConfigError, EmptyInputError, NoCodeBlockError, ValidationError
from .gateway import BoundModel


class AgentKind(str, Enum):
    EXPLAINER = "EXPLAINER"
    CONCEPT_VERIFIER = "CONCEPT_VERIFIER"
    FACT_CHECKER = "FACT_CHECKER"
    TEST_GENERATOR = "TEST_GENERATOR"
    ARTIFACT_LINTER = "ARTIFACT_LINTER"


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    UNCERTAIN = "UNCERTAIN"


class ClaimLabel(str, Enum):
    ENTAILED = "ENTAILED"
    CONTRADICTED = "CONTRADICTED"
    NEUTRAL = "NEUTRAL"


class HintKind(str, Enum):
    MISSING_DEFINITION = "MISSING_DEFINITION"
    SYNTAX_LEAK = "SYNTAX_LEAK"
    API_MISMATCH = "API_MISMATCH"
    LOGIC_REMOVED = "LOGIC_REMOVED"
    COMPILER_DIRECTED = "COMPILER_DIRECTED"
    STYLE = "STYLE"


class HintPolarity(str, Enum):
    POSITIVE_EXAMPLE = "POSITIVE_EXAMPLE"
    NEGATIVE_EXAMPLE = "NEGATIVE_EXAMPLE"
    INSTRUCTION = "INSTRUCTION"


@dataclass(frozen=True)
class Hint:
    kind: HintKind
    message: str
    polarity: HintPolarity
    snippet: str | None = None


@dataclass(frozen=True)
class Claim:
    text: str
    label: ClaimLabel = ClaimLabel.NEUTRAL
    evidence: str | None = None

    def __post_init__(self):
        if self.label in (ClaimLabel.ENTAILED, ClaimLabel.CONTRADICTED):
            if not self.evidence:
                raise ValidationError(
                    f"{self.label.value} claim must carry evidence"
                )


@dataclass(frozen=True)
class Fact:
    fact_id: str
    statement: str
    negations: tuple[str, ...] = ()


@dataclass(frozen=True)
class FactBase:
    language: str
    facts: tuple[Fact, ...] = ()


def load_fact_base(path: str | Path) -> FactBase:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"fact base not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        facts = tuple(
            Fact(
                fact_id=f["fact_id"],
                statement=f["statement"],
                negations=tuple(f.get("negations", ())),
            )
            for f in doc.get("facts", [])
        )
        return FactBase(language=doc["language"], facts=facts)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: bad fact entry: {exc}") from None


@dataclass(frozen=True)
class ConceptTag:
    concept_id: str
    description: str = ""


@dataclass(frozen=True)
class ConceptBlueprint:
    concepts: tuple[ConceptTag, ...] = ()
    narrative: str = ""

    def concept_ids(self) -> tuple[str, ...]:
        return tuple(c.concept_id for c in self.concepts)


@dataclass(frozen=True)
class AgentVerdict:
    agent: AgentKind
    verdict: Verdict
    hints: tuple[Hint, ...] = ()
    payload: str = ""

    def __post_init__(self):
        if self.verdict is Verdict.FAIL and not self.hints:
            raise ValidationError("FAIL verdict must carry at least one hint")


@dataclass(frozen=True)
class LintConfig:
    leak_keywords: tuple[str, ...] = ()
    api_deny: Mapping[str, str] = field(default_factory=dict)
    ratio_min: float = 0.5


DEFAULT_CONCEPT_VOCABULARY: dict[str, str] = {
    "iteration": "repeating work with loops",
    "recursion": "functions that call themselves",
    "conditional-branching": "choosing paths with if/else or switch",
    "arithmetic": "numeric computation",
    "comparison": "ordering and equality tests",
    "string-manipulation": "building or transforming text",
    "collection-handling": "lists, maps, arrays, sets",
    "input-output": "reading input or printing output",
    "error-handling": "detecting and reacting to failures",
    "state-mutation": "variables reassigned over time",
    "function-definition": "named reusable routines",
    "type-conversion": "casting values between types",
    "concurrency": "parallel or asynchronous execution",
    "resource-management": "acquiring and releasing files, memory, handles",
}


# =========================================================================
# Text plumbing
# =========================================================================

_WORD_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def normalize_tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def extract_claims(explanation: str) -> list[Claim]:
    """Split an explanation into sentence-level claims.

    Fragments under three words are discarded; they carry no checkable
    content.
    """
    claims = []
    for raw in _SENTENCE_SPLIT_RE.split(explanation.strip()):
        sentence = raw.strip()
        if not sentence:
            continue
        if len(normalize_tokens(sentence)) < 3:
            continue
        claims.append(Claim(text=sentence))
    return claims


def nli_check(claims: Iterable[Claim], fact_base: FactBase) -> list[Claim]:
    """Label claims against the fact base by normalized-token containment.

    For each fact, negation patterns are tested before the statement: a
    negated restatement contains the statement's tokens plus a negator, so
    testing containment first would call a contradiction an entailment.
    The first fact that matches decides the label.
    """
    labeled = []
    for claim in claims:
        tokens = set(normalize_tokens(claim.text))
        label = ClaimLabel.NEUTRAL
        evidence = None
        for fact in fact_base.facts:
            hit = None
            for pattern in fact.negations:
                if set(normalize_tokens(pattern)) <= tokens:
                    hit = ClaimLabel.CONTRADICTED
                    break
            if hit is None and set(normalize_tokens(fact.statement)) <= tokens:
                hit = ClaimLabel.ENTAILED
            if hit is not None:
                label = hit
                evidence = fact.fact_id
                break
        labeled.append(Claim(text=claim.text, label=label, evidence=evidence))
    return labeled


# =========================================================================
# Explainer and concept blueprinting
# =========================================================================

_EXPLAIN_SYSTEM = (
    "You describe programs precisely, one declarative sentence per behavior."
)
_CONCEPT_SYSTEM = (
    "You identify the programming concepts a program relies on."
)
_CONCEPT_LINE_RE = re.compile(r"concepts\s*:\s*(.+)", re.IGNORECASE)


def explain_code(code: str, language: str, bound: BoundModel) -> str:
    if not code.strip():
        raise EmptyInputError("cannot explain empty code")
    user = (
        f"Explain what the following {language} program does. "
        "Write short declarative sentences, one per behavior.\n\n"
        f"```\n{code}\n```"
    )
    return bound.ask(_EXPLAIN_SYSTEM, user).content


def explain_concepts(
    code: str,
    language: str,
    bound: BoundModel,
    vocabulary: Mapping[str, str] | None = None,
) -> ConceptBlueprint:
    """Ask the backend for the concepts a program uses.

    The reply is expected to carry a line 'concepts: a, b, c'; ids outside
    the vocabulary are dropped. An unparseable reply degrades to a
    narrative-only blueprint rather than an error.
    """
    if not code.strip():
        raise EmptyInputError("cannot blueprint empty code")
    vocabulary = (
        vocabulary if vocabulary is not None else DEFAULT_CONCEPT_VOCABULARY
    )
    menu = ", ".join(sorted(vocabulary))
    user = (
        f"Identify the programming concepts used by this {language} program. "
        f"Choose only from: {menu}.\n"
        "Reply with one line of the form 'concepts: a, b, c' followed by a "
        "short narrative.\n\n"
        f"```\n{code}\n```"
    )
    content = bound.ask(_CONCEPT_SYSTEM, user).content
    concepts: list[ConceptTag] = []
    match = _CONCEPT_LINE_RE.search(content)
    if match:
        seen = set()
        for raw in match.group(1).split(","):
            concept_id = re.sub(r"\s+", "-", raw.strip().lower())
            if concept_id in vocabulary and concept_id not in seen:
                seen.add(concept_id)
                concepts.append(
                    ConceptTag(
                        concept_id=concept_id,
                        description=vocabulary[concept_id],
                    )
                )
    return ConceptBlueprint(concepts=tuple(concepts), narrative=content)


# =========================================================================
# Artifact linter
# =========================================================================

_COMMENT_PREFIXES = ("#", "//", "/*", "*", "--")
_IMPORT_PREFIXES = (
    "import ", "from ", "using ", "use ", "package ", "extern ", "require(",
    "pragma ", "#include",
)


def count_statements(code: str) -> int:
    """Non-blank lines that are neither comments nor imports.

    A crude proxy for logic volume; it only needs to be stable and
    symmetric between source and translation.
    """
    count = 0
    for line in code.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith(_COMMENT_PREFIXES):
            continue
        if stripped.startswith(_IMPORT_PREFIXES):
            continue
        count += 1
    return count


def _word_hits(code: str, word: str) -> list[str]:
    pattern = re.compile(
        rf"(?<![A-Za-z0-9_]){re.escape(word)}(?![A-Za-z0-9_])"
    )
    return [line for line in code.splitlines() if pattern.search(line)]


def lint_translation(
    source_code: str,
    translated_code: str,
    source_lang: str,
    target_lang: str,
    rules: LintConfig,
) -> AgentVerdict:
    """Mechanical pitfall scan: leaked source keywords, shrunken logic,
    denied API identifiers. Any finding fails the verdict."""
    hints: list[Hint] = []
    for keyword in rules.leak_keywords:
        lines = _word_hits(translated_code, keyword)
        if lines:
            hints.append(
                Hint(
                    kind=HintKind.SYNTAX_LEAK,
                    message=(
                        f"{source_lang} keyword {keyword!r} leaked into the "
                        f"{target_lang} translation"
                    ),
                    polarity=HintPolarity.NEGATIVE_EXAMPLE,
                    snippet=lines[0].strip(),
                )
            )
    source_statements = count_statements(source_code)
    translated_statements = count_statements(translated_code)
    floor = math.floor(rules.ratio_min * source_statements)
    if translated_statements < floor:
        hints.append(
            Hint(
                kind=HintKind.LOGIC_REMOVED,
                message=(
                    f"translation has {translated_statements} statements "
                    f"against {source_statements} in the source; at least "
                    f"{floor} expected"
                ),
                polarity=HintPolarity.NEGATIVE_EXAMPLE,
            )
        )
    for identifier, reason in rules.api_deny.items():
        lines = _word_hits(translated_code, identifier)
        if lines:
            hints.append(
                Hint(
                    kind=HintKind.API_MISMATCH,
                    message=f"{identifier!r} is not valid here: {reason}",
                    polarity=HintPolarity.NEGATIVE_EXAMPLE,
                    snippet=lines[0].strip(),
                )
            )
    if hints:
        return AgentVerdict(
            agent=AgentKind.ARTIFACT_LINTER,
            verdict=Verdict.FAIL,
            hints=tuple(hints),
        )
    return AgentVerdict(agent=AgentKind.ARTIFACT_LINTER, verdict=Verdict.PASS)


def load_lint_rules(path: str | Path) -> dict[str, LintConfig]:
    """Lint config keyed by 'source->target' pair."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"lint config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    rules = {}
    for pair, raw in doc.get("pairs", {}).items():
        rules[pair] = LintConfig(
            leak_keywords=tuple(raw.get("leak_keywords", ())),
            api_deny=dict(raw.get("api_deny", {})),
            ratio_min=float(raw.get("ratio_min", 0.5)),
        )
    return rules


# =========================================================================
# Test generator
# =========================================================================

_TESTGEN_SYSTEM = (
    "You write minimal standalone checks for translated programs."
)


def generate_tests(
    source_code: str,
    translated_code: str,
    target_lang: str,
    bound: BoundModel,
) -> AgentVerdict:
    """Draft runnable checks for the translation.

    The protocol is printed, not framework-based: each check must emit
    'PASS <name>' or 'FAIL <name>' on its own stdout line. The verdict is
    always UNCERTAIN; generated tests are evidence to execute, not a
    judgment by themselves.
    """
    user = (
        f"Write checks in {target_lang} for the program below. Each check "
        "must print exactly 'PASS <name>' or 'FAIL <name>' on one line. "
        "Do not redefine the program; assume it is present above your "
        "code. Reply with one fenced code block.\n\n"
        f"Program:\n```\n{translated_code}\n```\n\n"
        f"It was translated from this source:\n```\n{source_code}\n```"
    )
    content = bound.ask(_TESTGEN_SYSTEM, user).content
    blocks = fenced_blocks(content)
    if not blocks:
        raise NoCodeBlockError("test generator reply holds no fenced block")
    return AgentVerdict(
        agent=AgentKind.TEST_GENERATOR,
        verdict=Verdict.UNCERTAIN,
        payload=blocks[0][1],
    )


# =========================================================================
# Batch orchestration
# =========================================================================


@dataclass
class AgentContext:
    """Everything a batch needs; pipeline code assembles one per attempt."""

    source_code: str
    translated_code: str
    source_lang: str
    target_lang: str
    bound: BoundModel | None = None
    fact_bases: Mapping[str, FactBase] = field(default_factory=dict)
    lint_rules: Mapping[str, LintConfig] = field(default_factory=dict)
    vocabulary: Mapping[str, str] = field(
        default_factory=lambda: dict(DEFAULT_CONCEPT_VOCABULARY)
    )
    blueprint: ConceptBlueprint | None = None


def _uncertain(agent: AgentKind, why: str) -> AgentVerdict:
    return AgentVerdict(
        agent=agent,
        verdict=Verdict.UNCERTAIN,
        hints=(
            Hint(
                kind=HintKind.STYLE,
                message=why,
                polarity=HintPolarity.INSTRUCTION,
            ),
        ),
    )


def _run_explainer(ctx: AgentContext) -> AgentVerdict:
    if ctx.bound is None:
        return _uncertain(AgentKind.EXPLAINER, "no backend configured")
    explanation = explain_code(ctx.translated_code, ctx.target_lang, ctx.bound)
    if not explanation.strip():
        return _uncertain(AgentKind.EXPLAINER, "explainer returned nothing")
    return AgentVerdict(
        agent=AgentKind.EXPLAINER, verdict=Verdict.PASS, payload=explanation
    )


def _run_fact_checker(ctx: AgentContext, explanation: str | None) -> AgentVerdict:
    if explanation is None:
        return _uncertain(
            AgentKind.FACT_CHECKER, "no explanation available to check"
        )
    fact_base = ctx.fact_bases.get(ctx.target_lang)
    if fact_base is None:
        return _uncertain(
            AgentKind.FACT_CHECKER,
            f"no fact base for language {ctx.target_lang!r}",
        )
    labeled = nli_check(extract_claims(explanation), fact_base)
    if not labeled:
        return _uncertain(AgentKind.FACT_CHECKER, "explanation yields no claims")
    contradicted = [c for c in labeled if c.label is ClaimLabel.CONTRADICTED]
    counts = (
        f"{sum(c.label is ClaimLabel.ENTAILED for c in labeled)} entailed, "
        f"{len(contradicted)} contradicted, "
        f"{sum(c.label is ClaimLabel.NEUTRAL for c in labeled)} neutral"
    )
    if contradicted:
        hints = tuple(
            Hint(
                kind=HintKind.API_MISMATCH,
                message=(
                    f"explanation claim contradicts fact {c.evidence}: "
                    f"{c.text}"
                ),
                polarity=HintPolarity.NEGATIVE_EXAMPLE,
                snippet=c.text,
            )
            for c in contradicted
        )
        return AgentVerdict(
            agent=AgentKind.FACT_CHECKER,
            verdict=Verdict.FAIL,
            hints=hints,
            payload=counts,
        )
    return AgentVerdict(
        agent=AgentKind.FACT_CHECKER, verdict=Verdict.PASS, payload=counts
    )


def _run_concept_verifier(ctx: AgentContext) -> AgentVerdict:
    if ctx.blueprint is None or not ctx.blueprint.concepts:
        return _uncertain(
            AgentKind.CONCEPT_VERIFIER, "no source blueprint available"
        )
    if ctx.bound is None:
        return _uncertain(AgentKind.CONCEPT_VERIFIER, "no backend configured")
    translated = explain_concepts(
        ctx.translated_code, ctx.target_lang, ctx.bound, ctx.vocabulary
    )
    have = set(translated.concept_ids())
    missing = [c for c in ctx.blueprint.concepts if c.concept_id not in have]
    if missing:
        hints = tuple(
            Hint(
                kind=HintKind.LOGIC_REMOVED,
                message=(
                    f"source concept {c.concept_id!r} ({c.description}) is "
                    "not evident in the translation"
                ),
                polarity=HintPolarity.INSTRUCTION,
            )
            for c in missing
        )
        return AgentVerdict(
            agent=AgentKind.CONCEPT_VERIFIER,
            verdict=Verdict.FAIL,
            hints=hints,
            payload=",".join(sorted(have)),
        )
    return AgentVerdict(
        agent=AgentKind.CONCEPT_VERIFIER,
        verdict=Verdict.PASS,
        payload=",".join(sorted(have)),
    )


def run_agents(
    ctx: AgentContext, agents: Sequence[AgentKind]
) -> list[AgentVerdict]:
    """Run the batch in declaration order, isolating per-agent failures.

    The fact checker consumes whatever explanation an earlier explainer in
    the same batch produced; if none ran, it stays uncertain.
    """
    verdicts: list[AgentVerdict] = []
    explanation: str | None = None
    for kind in agents:
        try:
            if kind is AgentKind.EXPLAINER:
                verdict = _run_explainer(ctx)
                if verdict.verdict is Verdict.PASS:
                    explanation = verdict.payload
            elif kind is AgentKind.FACT_CHECKER:
                verdict = _run_fact_checker(ctx, explanation)
            elif kind is AgentKind.CONCEPT_VERIFIER:
                verdict = _run_concept_verifier(ctx)
            elif kind is AgentKind.TEST_GENERATOR:
                if ctx.bound is None:
                    verdict = _uncertain(kind, "no backend configured")
                else:
                    verdict = generate_tests(
                        ctx.source_code,
                        ctx.translated_code,
                        ctx.target_lang,
                        ctx.bound,
                    )
            elif kind is AgentKind.ARTIFACT_LINTER:
                pair = f"{ctx.source_lang}->{ctx.target_lang}"
                rules = ctx.lint_rules.get(pair, LintConfig())
                verdict = lint_translation(
                    ctx.source_code,
                    ctx.translated_code,
                    ctx.source_lang,
                    ctx.target_lang,
                    rules,
                )
            else:
                verdict = _uncertain(kind, f"unknown agent kind {kind!r}")
        except Exception as exc:
            verdict = _uncertain(kind, f"agent raised {type(exc).__name__}: {exc}")
        verdicts.append(verdict)
    return verdicts


def agents_pass(verdicts: Iterable[AgentVerdict]) -> bool:
    return all(v.verdict is not Verdict.FAIL for v in verdicts)
