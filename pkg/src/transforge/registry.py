"""Model registry: proficiency profiles and language-pair ranking.

The registry is a versioned catalog of chat models. Each profile carries a
per-language proficiency map in [0, 1]; a pair score for source -> target is
the geometric mean of the two proficiencies, so one missing or weak language
drags the pair down symmetrically. Mutation never happens in place: every
update returns a new Registry with version + 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    NoCandidateError,
    RegistryParseError,
    ScoreOutOfRangeError,
    UnknownModelError,
    ValidationError,
)

DEFAULT_LANGUAGES = frozenset(
    {"python", "solidity", "move", "java", "c", "cpp", "go"}
)


@dataclass(frozen=True)
class ModelProfile:
    """One registered model and what it claims to be good at."""

    model_id: str
    display_name: str
    proficiency: Mapping[str, float]
    context_window: int
    backend_ref: str
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.model_id:
            raise ValidationError("model_id must be non-empty")
        if self.context_window <= 0:
            raise ValidationError(
                f"{self.model_id}: context_window must be positive"
            )
        if not self.backend_ref:
            raise ValidationError(f"{self.model_id}: backend_ref must be non-empty")
        for lang, score in self.proficiency.items():
            _check_score(self.model_id, lang, score)


@dataclass(frozen=True)
class Registry:
    """Immutable snapshot of the model catalog."""

    version: int
    profiles: Mapping[str, ModelProfile] = field(default_factory=dict)

    def get(self, model_id: str) -> ModelProfile:
        try:
            return self.profiles[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.profiles


@dataclass(frozen=True)
class RankedModel:
    model_id: str
    score: float


def _check_score(model_id: str, language: str, score) -> None:
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise ValidationError(
            f"{model_id}: proficiency[{language!r}] must be a number"
        )
    if not 0.0 <= float(score) <= 1.0:
        raise ScoreOutOfRangeError(
            f"{model_id}: proficiency[{language!r}]={score} outside [0, 1]"
        )


def load_registry(
    path: str | Path,
    *,
    languages: Iterable[str] = DEFAULT_LANGUAGES,
    known_backends: Iterable[str] | None = None,
) -> Registry:
    """Load and validate a registry document.

    languages is the declared language-id set; a proficiency key outside it
    is a validation error. When known_backends is given, every backend_ref
    must resolve into it (a dangling ref aborts the load).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise RegistryParseError(f"registry file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise RegistryParseError(f"{path}: invalid JSON: {exc}") from None
    return parse_registry(doc, languages=languages, known_backends=known_backends)


def parse_registry(
    doc: object,
    *,
    languages: Iterable[str] = DEFAULT_LANGUAGES,
    known_backends: Iterable[str] | None = None,
) -> Registry:
    if not isinstance(doc, dict):
        raise RegistryParseError("registry document must be a JSON object")
    if not isinstance(doc.get("version"), int):
        raise RegistryParseError("registry 'version' must be an integer")
    models = doc.get("models")
    if not isinstance(models, list):
        raise RegistryParseError("registry 'models' must be a list")

    lang_set = set(languages)
    backends = set(known_backends) if known_backends is not None else None
    profiles: dict[str, ModelProfile] = {}
    for entry in models:
        if not isinstance(entry, dict):
            raise RegistryParseError("each model entry must be a JSON object")
        try:
            profile = ModelProfile(
                model_id=entry["model_id"],
                display_name=entry.get("display_name", entry["model_id"]),
                proficiency=dict(entry.get("proficiency", {})),
                context_window=entry.get("context_window", 4096),
                backend_ref=entry["backend_ref"],
                tags=tuple(entry.get("tags", ())),
            )
        except KeyError as exc:
            raise RegistryParseError(f"model entry missing field {exc}") from None
        if profile.model_id in profiles:
            raise ValidationError(f"duplicate model_id: {profile.model_id!r}")
        for lang in profile.proficiency:
            if lang not in lang_set:
                raise ValidationError(
                    f"{profile.model_id}: unknown language id {lang!r}"
                )
        if backends is not None and profile.backend_ref not in backends:
            raise ValidationError(
                f"{profile.model_id}: backend_ref {profile.backend_ref!r} "
                "does not resolve to a configured backend"
            )
        profiles[profile.model_id] = profile
    return Registry(version=doc["version"], profiles=profiles)


def registry_to_doc(reg: Registry) -> dict:
    return {
        "version": reg.version,
        "models": [
            {
                "model_id": p.model_id,
                "display_name": p.display_name,
                "proficiency": dict(sorted(p.proficiency.items())),
                "context_window": p.context_window,
                "backend_ref": p.backend_ref,
                "tags": list(p.tags),
            }
            for _, p in sorted(reg.profiles.items())
        ],
    }


def write_registry(reg: Registry, path: str | Path) -> None:
    """Serialize with sorted keys so writes are reproducible byte for byte."""
    Path(path).write_text(json.dumps(registry_to_doc(reg), indent=2) + "\n")


def pair_score(profile: ModelProfile, source_lang: str, target_lang: str) -> float | None:
    """Geometric mean of the two proficiencies, None when either is absent.

    Absence means exclusion from ranking, not a zero score.
    """
    src = profile.proficiency.get(source_lang)
    tgt = profile.proficiency.get(target_lang)
    if src is None or tgt is None:
        return None
    return math.sqrt(src * tgt)


def rank_models(
    reg: Registry, source_lang: str, target_lang: str, k: int | None = None
) -> list[RankedModel]:
    """Top-k models for a pair, best first.

    Ties break by ascending model_id so rankings are stable across runs.
    Raises NoCandidateError when no profile covers both languages.
    """
    scored = []
    for model_id, profile in reg.profiles.items():
        score = pair_score(profile, source_lang, target_lang)
        if score is not None:
            scored.append(RankedModel(model_id=model_id, score=score))
    if not scored:
        raise NoCandidateError(source_lang, target_lang)
    scored.sort(key=lambda r: (-r.score, r.model_id))
    if k is not None:
        scored = scored[:k]
    return scored


def update_profile(
    reg: Registry, model_id: str, language: str, score: float
) -> Registry:
    """Return a new registry with one proficiency changed and version + 1."""
    profile = reg.get(model_id)
    _check_score(model_id, language, score)
    proficiency = dict(profile.proficiency)
    proficiency[language] = float(score)
    profiles = dict(reg.profiles)
    profiles[model_id] = replace(profile, proficiency=proficiency)
    return Registry(version=reg.version + 1, profiles=profiles)
