"""Engine configuration: one JSON document wiring every dependency.

Paths inside the document resolve relative to the document's own
directory, so a config tree ships as a movable bundle. Loading also
produces a content digest over the document and every file it pulls in;
reports carry the digest so a number can always be traced back to the
exact configuration that produced it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .agents import AgentKind, FactBase, LintConfig, load_fact_base, load_lint_rules
from .compilers import default_toolchains, load_toolchains
from .director import default_filter_config, filter_from_doc
from .errors import ConfigError
from .gateway import Backend, ScriptedBackend, http_backend_for_ref, load_scenario
from .pipeline import DEFAULT_AGENTS, ConvergenceMode, EngineDeps
from .prompts import FewShotExample, PromptTemplate, load_template
from .registry import load_registry

__all__ = ["EngineConfig", "load_engine_config", "load_few_shots"]


@dataclass
class EngineConfig:
    deps: EngineDeps
    convergence: ConvergenceMode
    max_attempts: int
    digest: str
    base_dir: Path
    backend_refs: tuple[str, ...] = ()


class _Digest:
    def __init__(self):
        self._hash = hashlib.sha256()

    def add(self, role: str, data: bytes) -> None:
        self._hash.update(role.encode())
        self._hash.update(b"\x00")
        self._hash.update(data)
        self._hash.update(b"\x01")

    def hex(self) -> str:
        return self._hash.hexdigest()


def _read(path: Path, what: str) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None


def _backend_from_doc(ref: str, doc: dict, base: Path, digest: _Digest) -> Backend:
    kind = doc.get("kind")
    if kind == "scripted":
        scenario_rel = doc.get("scenario")
        if not scenario_rel:
            raise ConfigError(f"backend {ref!r}: scripted backend needs a scenario")
        scenario_path = base / scenario_rel
        digest.add(f"scenario:{ref}", _read(scenario_path, "scenario"))
        return ScriptedBackend(load_scenario(scenario_path))
    if kind == "http":
        settings = {
            k: doc[k] for k in ("url", "timeout") if doc.get(k) is not None
        }
        env_name = doc.get("api_key_env")
        if env_name and os.environ.get(env_name):
            settings["api_key"] = os.environ[env_name]
        return http_backend_for_ref(ref, settings)
    raise ConfigError(f"backend {ref!r}: unknown kind {kind!r}")


def load_few_shots(path: str | Path) -> tuple[FewShotExample, ...]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"few-shot file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        return tuple(
            FewShotExample(
                source_lang=s["source_lang"],
                target_lang=s["target_lang"],
                source_code=s["source_code"],
                target_code=s["target_code"],
                note=s.get("note"),
            )
            for s in doc.get("shots", [])
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: bad few-shot entry: {exc}") from None


def load_engine_config(path: str | Path) -> EngineConfig:
    """Load a config document and everything it references.

    Any missing file, dangling backend ref, or malformed section raises
    ConfigError; a config either loads completely or not at all.
    """
    path = Path(path)
    base = path.parent
    raw = _read(path, "config")
    digest = _Digest()
    digest.add("config", raw)
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config document must be a JSON object")

    backends: dict[str, Backend] = {}
    for ref, backend_doc in doc.get("backends", {}).items():
        backends[ref] = _backend_from_doc(ref, backend_doc, base, digest)

    registry_rel = doc.get("registry")
    if not registry_rel:
        raise ConfigError(f"{path}: config needs a registry path")
    registry_path = base / registry_rel
    digest.add("registry", _read(registry_path, "registry"))
    registry = load_registry(
        registry_path, known_backends=backends.keys() if backends else None
    )

    if "filter" in doc:
        filter_path = base / doc["filter"]
        raw_filter = _read(filter_path, "filter")
        digest.add("filter", raw_filter)
        try:
            filter_doc = json.loads(raw_filter)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{filter_path}: invalid JSON: {exc}") from None
        filt = filter_from_doc(filter_doc)
    else:
        filt = default_filter_config()

    if "toolchains" in doc:
        toolchain_path = base / doc["toolchains"]
        digest.add("toolchains", _read(toolchain_path, "toolchains"))
        toolchains = load_toolchains(toolchain_path)
    else:
        toolchains = default_toolchains()

    if "agents" in doc:
        try:
            agents = tuple(AgentKind(name) for name in doc["agents"])
        except ValueError as exc:
            raise ConfigError(f"{path}: unknown agent: {exc}") from None
    else:
        agents = DEFAULT_AGENTS

    fact_bases: dict[str, FactBase] = {}
    for lang, rel in doc.get("fact_bases", {}).items():
        fact_path = base / rel
        digest.add(f"facts:{lang}", _read(fact_path, "fact base"))
        fact_bases[lang] = load_fact_base(fact_path)

    lint_rules: dict[str, LintConfig] = {}
    if "lint_rules" in doc:
        lint_path = base / doc["lint_rules"]
        digest.add("lint", _read(lint_path, "lint config"))
        lint_rules = load_lint_rules(lint_path)

    few_shots: tuple[FewShotExample, ...] = ()
    if "few_shots" in doc:
        shots_path = base / doc["few_shots"]
        digest.add("shots", _read(shots_path, "few-shot"))
        few_shots = load_few_shots(shots_path)

    translation_template: PromptTemplate | None = None
    refinement_template: PromptTemplate | None = None
    templates = doc.get("templates", {})
    if "translation" in templates:
        tpath = base / templates["translation"]
        digest.add("template:translation", _read(tpath, "template"))
        translation_template = load_template(tpath)
    if "refinement" in templates:
        tpath = base / templates["refinement"]
        digest.add("template:refinement", _read(tpath, "template"))
        refinement_template = load_template(tpath)

    vocabulary = doc.get("vocabulary")
    if vocabulary is not None and not isinstance(vocabulary, dict):
        raise ConfigError(f"{path}: vocabulary must be an object")

    try:
        convergence = ConvergenceMode(
            doc.get("convergence", ConvergenceMode.COMPILE_AND_AGENTS.value)
        )
    except ValueError:
        raise ConfigError(
            f"{path}: unknown convergence mode {doc.get('convergence')!r}"
        ) from None
    max_attempts = doc.get("max_attempts", 5)
    if not isinstance(max_attempts, int) or max_attempts < 1:
        raise ConfigError(f"{path}: max_attempts must be a positive integer")

    deps = EngineDeps(
        registry=registry,
        filter=filt,
        toolchains=toolchains,
        backends=backends,
        agents=agents,
        fact_bases=fact_bases,
        lint_rules=lint_rules,
        vocabulary=vocabulary,
        translation_template=translation_template,
        refinement_template=refinement_template,
        few_shots=few_shots,
        keep_artifacts=bool(doc.get("keep_artifacts", False)),
    )
    return EngineConfig(
        deps=deps,
        convergence=convergence,
        max_attempts=max_attempts,
        digest=digest.hex(),
        base_dir=base,
        backend_refs=tuple(backends),
    )
