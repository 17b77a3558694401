"""Exception hierarchy shared across the package.

Everything raised deliberately by this package derives from TransforgeError so
callers can catch one base. Infrastructure-flavored failures (transport,
toolchain, config) are distinguished from task-flavored ones (no code block,
degenerate update) by subclassing, not by string matching.
"""

from __future__ import annotations


class TransforgeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TransforgeError):
    """A config document is missing, malformed, or inconsistent."""


class RegistryParseError(ConfigError):
    """Registry document is not valid JSON or misses required fields."""


class ValidationError(TransforgeError):
    """A value violates a documented invariant."""


class UnknownModelError(TransforgeError, KeyError):
    def __init__(self, model_id: str):
        super().__init__(model_id)
        self.model_id = model_id

    def __str__(self) -> str:
        return f"unknown model: {self.model_id!r}"


class ScoreOutOfRangeError(ValidationError):
    """Proficiency score outside [0, 1]."""


class NoCandidateError(TransforgeError):
    """No registered model covers the requested language pair."""

    def __init__(self, source_lang: str, target_lang: str):
        super().__init__(f"no model covers {source_lang}->{target_lang}")
        self.source_lang = source_lang
        self.target_lang = target_lang


class DegenerateUpdateError(TransforgeError):
    """Belief update normalizer collapsed to zero; the model assigns zero
    probability to the observed evidence under every state."""


class BackendError(TransforgeError):
    """Base for chat-backend failures."""


class TransportError(BackendError):
    """Network-level failure that persisted through the retry budget."""


class GatewayTimeoutError(TransportError):
    """Request exceeded the configured deadline after retries."""


class ProtocolError(BackendError):
    """The backend answered, but the body did not follow the wire contract."""


class NoCodeBlockError(TransforgeError):
    """No extractable code was found in a model response."""


class UnknownParserError(TransforgeError, KeyError):
    def __init__(self, parser_id: str):
        super().__init__(parser_id)
        self.parser_id = parser_id

    def __str__(self) -> str:
        return f"unknown diagnostic parser: {self.parser_id!r}"


class SlotMismatchError(ValidationError):
    """Template references a slot the current build context forbids or lacks."""


class IllegalTransitionError(TransforgeError):
    def __init__(self, phase: str, event_kind: str, detail: str = ""):
        msg = f"event {event_kind} is illegal in phase {phase}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.phase = phase
        self.event_kind = event_kind


class LedgerParseError(TransforgeError):
    """Ledger file is truncated, out of order, or not valid JSONL."""


class ReplayDivergenceError(TransforgeError):
    """A recomputed decision differs from the recorded one."""

    def __init__(self, seq: int, kind: str, expected: object, actual: object):
        super().__init__(
            f"replay diverged at seq {seq} ({kind}): recorded {expected!r}, recomputed {actual!r}"
        )
        self.seq = seq
        self.kind = kind
        self.expected = expected
        self.actual = actual


class UnknownLanguageError(TransforgeError, KeyError):
    def __init__(self, language: str):
        super().__init__(language)
        self.language = language

    def __str__(self) -> str:
        return f"no keyword table for language: {self.language!r}"


class EmptyInputError(ValidationError):
    """An aggregate was asked for over zero items."""
