"""Similarity scoring and success accounting for translated code.

The similarity score, codebleu_lite, is a weighted blend of four
components over a shared token stream: plain n-gram BLEU, a variant where
language keywords weigh 5x, bracket-nesting structure match, and a
defined-then-used identifier match. The last two stand in for the AST and
dataflow components of full CodeBLEU, which would need a real parser per
language; scores are comparable across runs of this harness, not to
published CodeBLEU numbers.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from decimal import ROUND_HALF_UP, Decimal
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInputError, UnknownLanguageError, ValidationError
from .pipeline import OutcomeStatus

__all__ = [
    "bleu",
    "bracket_signatures",
    "codebleu_lite",
    "identifier_flows",
    "keywords_for",
    "known_languages",
    "success_rate",
    "tokenize",
]

DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)

# Strings and comments lex as single tokens so their contents never leak
# into the bracket or identifier components.
_TOKEN_RE = re.compile(
    r"""
      "(?:\\.|[^"\\\n])*"
    | '(?:\\.|[^'\\\n])*'
    | \#[^\n]*
    | //[^\n]*
    | /\*.*?\*/
    | \d+(?:\.\d+)?(?:[eE][+-]?\d+)?
    | [A-Za-z_][A-Za-z0-9_]*
    | ==|!=|<=|>=|->|=>|\+\+|--|&&|\|\||<<|>>|\*\*|\+=|-=|\*=|/=|%=|::|:=
    | \S
    """,
    re.VERBOSE | re.DOTALL,
)

_OPENERS = "([{"
_CLOSERS = ")]}"

# Tokens that introduce a name in most of the supported languages; used by
# the definition heuristic alongside plain assignment.
_DEFINERS = frozenset(
    {
        "def", "func", "fun", "function", "fn", "class", "struct",
        "interface", "enum", "var", "let", "const", "type", "module",
        "contract", "library",
    }
)


def tokenize(source: str) -> list[str]:
    return _TOKEN_RE.findall(source)


@lru_cache(maxsize=1)
def _keyword_table() -> dict[str, frozenset[str]]:
    path = Path(__file__).parent / "data" / "keywords.json"
    doc = json.loads(path.read_text())
    return {lang: frozenset(words) for lang, words in doc.items()}


def known_languages() -> frozenset[str]:
    return frozenset(_keyword_table())


def keywords_for(lang: str) -> frozenset[str]:
    table = _keyword_table()
    try:
        return table[lang]
    except KeyError:
        raise UnknownLanguageError(
            f"no keyword list configured for language {lang!r}"
        ) from None


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def bleu(
    candidate: Sequence[str], reference: Sequence[str], max_n: int = 4
) -> float:
    """Sentence BLEU over token lists, uniform weights, no smoothing.

    A zero modified precision at any order zeroes the whole score; the
    brevity penalty is exp(1 - r/c) for short candidates.
    """
    if max_n < 1:
        raise ValidationError("max_n must be at least 1")
    candidate = list(candidate)
    reference = list(reference)
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(candidate, n)
        total = sum(cand_grams.values())
        if total == 0:
            return 0.0
        matched = sum((cand_grams & _ngrams(reference, n)).values())
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total)
    c, r = len(candidate), len(reference)
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / max_n)


def _weighted_bleu(
    candidate: Sequence[str],
    reference: Sequence[str],
    keyword_set: frozenset[str],
    max_n: int,
) -> float:
    """BLEU with keyword-touching n-grams counted 5x in both numerator
    and denominator, so identity still scores 1."""
    if not candidate:
        return 0.0

    def weight(gram: tuple) -> int:
        return 5 if any(t in keyword_set for t in gram) else 1

    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(candidate, n)
        total = sum(weight(g) * k for g, k in cand_grams.items())
        if total == 0:
            return 0.0
        clipped = cand_grams & _ngrams(reference, n)
        matched = sum(weight(g) * k for g, k in clipped.items())
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total)
    c, r = len(candidate), len(reference)
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / max_n)


def bracket_signatures(tokens: Iterable[str]) -> Counter:
    """Multiset of (bracket, nesting depth) pairs for every opener.

    A single depth counter spans all three bracket kinds; unmatched
    closers clamp at depth zero instead of failing, so any text yields a
    signature.
    """
    sigs: Counter = Counter()
    depth = 0
    for tok in tokens:
        if tok in _OPENERS:
            sigs[(tok, depth)] += 1
            depth += 1
        elif tok in _CLOSERS:
            depth = max(0, depth - 1)
    return sigs


def identifier_flows(
    tokens: Sequence[str], keyword_set: frozenset[str] = frozenset()
) -> Counter:
    """Identifiers that are defined and then used, as a def-use multiset.

    Definition sites: an identifier directly followed by a plain
    assignment operator, or directly after a declaring keyword. The first
    later occurrence of the same name closes the (def, use) pair; each
    name contributes at most one pair.
    """
    ident_re = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
    defined: set[str] = set()
    used: set[str] = set()
    pairs: Counter = Counter()
    for i, tok in enumerate(tokens):
        if not ident_re.match(tok) or tok in keyword_set:
            continue
        if tok in defined:
            if tok not in used:
                used.add(tok)
                pairs[(tok, tok)] += 1
            continue
        nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
        prev = tokens[i - 1] if i > 0 else ""
        if nxt in ("=", ":=") or prev in _DEFINERS:
            defined.add(tok)
    return pairs


def _f1(a: Counter, b: Counter) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    overlap = sum((a & b).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(a.values())
    recall = overlap / sum(b.values())
    return 2.0 * precision * recall / (precision + recall)


def codebleu_lite(
    candidate: str,
    reference: str,
    lang: str,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
) -> float:
    """Blend token BLEU, keyword-weighted BLEU, bracket structure, and
    identifier flow into one [0, 1] score.

    The n-gram order adapts to min(4, token counts) so an identical pair
    scores exactly 1 regardless of length.
    """
    weights = tuple(float(w) for w in weights)
    if len(weights) != 4:
        raise ValidationError("codebleu_lite takes exactly four weights")
    if any(w < 0 for w in weights):
        raise ValidationError("weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValidationError("weights must sum to 1")
    keyword_set = keywords_for(lang)
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    max_n = max(1, min(4, len(cand), len(ref)))
    plain = bleu(cand, ref, max_n)
    weighted = _weighted_bleu(cand, ref, keyword_set, max_n)
    brackets = _f1(bracket_signatures(cand), bracket_signatures(ref))
    flows = _f1(
        identifier_flows(cand, keyword_set),
        identifier_flows(ref, keyword_set),
    )
    components = (plain, weighted, brackets, flows)
    return sum(w * c for w, c in zip(weights, components))


def success_rate(outcomes: Sequence) -> float:
    """Percentage of SUCCESS outcomes, rounded half-up to one decimal."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInputError("success_rate needs at least one outcome")
    succeeded = sum(
        1 for o in outcomes if o.status is OutcomeStatus.SUCCESS
    )
    percent = Decimal(succeeded * 100) / Decimal(len(outcomes))
    return float(percent.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
