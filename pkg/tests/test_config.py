import json
import shutil
from pathlib import Path

import pytest

from transforge.agents import AgentKind, FactBase
from transforge.config import EngineConfig, load_engine_config, load_few_shots
from transforge.director import default_filter_config
from transforge.errors import ConfigError, ValidationError
from transforge.gateway import HttpBackend, ScriptedBackend
from transforge.ledger import MemoryLedger
from transforge.pipeline import (
    ConvergenceMode,
    OutcomeStatus,
    TranslationTask,
    translate,
)

DEMO_DIR = Path(__file__).parent.parent / "src" / "transforge" / "data" / "demo"


def _write_config(tmp_path, doc):
    path = tmp_path / "engine.json"
    path.write_text(json.dumps(doc))
    return path


def _minimal_registry(tmp_path, backend_ref="scripted"):
    (tmp_path / "registry.json").write_text(
        json.dumps(
            {
                "version": 1,
                "models": [
                    {
                        "model_id": "m1",
                        "proficiency": {"java": 0.9, "python": 0.9},
                        "backend_ref": backend_ref,
                    }
                ],
            }
        )
    )


def _empty_scenario(tmp_path):
    (tmp_path / "scenario.json").write_text(json.dumps({"rules": []}))


class TestDemoBundle:
    def test_demo_config_loads(self):
        cfg = load_engine_config(DEMO_DIR / "engine.json")
        assert isinstance(cfg, EngineConfig)
        assert set(cfg.deps.registry.profiles) == {"alpha", "beta"}
        assert cfg.backend_refs == ("scripted",)
        assert isinstance(cfg.deps.backends["scripted"], ScriptedBackend)
        assert cfg.deps.agents == (AgentKind.EXPLAINER, AgentKind.FACT_CHECKER)
        assert cfg.convergence is ConvergenceMode.COMPILE_AND_AGENTS
        assert cfg.max_attempts == 5
        assert len(cfg.digest) == 64
        assert int(cfg.digest, 16) >= 0

    def test_demo_run_converges_on_third_attempt(self):
        cfg = load_engine_config(DEMO_DIR / "engine.json")
        task = TranslationTask(
            task_id="demo",
            source_lang="java",
            target_lang="python",
            source_code=(DEMO_DIR / "source.java").read_text(),
            max_attempts=cfg.max_attempts,
            convergence=cfg.convergence,
        )
        ledger = MemoryLedger("demo")
        outcome = translate(task, cfg.deps, ledger)
        assert outcome.status is OutcomeStatus.SUCCESS
        assert outcome.attempts_used == 3
        actions = [
            e.payload["kind"] for e in ledger.events if e.kind == "ACTION_CHOSEN"
        ]
        assert actions == ["REFINE", "RESELECT", "ACCEPT"]
        assert "print(greet('x'))" in outcome.final_code

    def test_digest_is_stable_across_loads(self):
        a = load_engine_config(DEMO_DIR / "engine.json")
        b = load_engine_config(DEMO_DIR / "engine.json")
        assert a.digest == b.digest

    def test_digest_tracks_referenced_files(self, tmp_path):
        for name in ("engine.json", "registry.json", "scenario.json"):
            shutil.copy(DEMO_DIR / name, tmp_path / name)
        before = load_engine_config(tmp_path / "engine.json").digest
        scenario = json.loads((tmp_path / "scenario.json").read_text())
        scenario["default_response"] = "changed"
        (tmp_path / "scenario.json").write_text(json.dumps(scenario))
        after = load_engine_config(tmp_path / "engine.json").digest
        # the config file itself is byte-identical; only a dependency moved
        assert before != after


class TestLoadFailures:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_engine_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "engine.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_engine_config(path)

    def test_non_object_document(self, tmp_path):
        path = tmp_path / "engine.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="object"):
            load_engine_config(path)

    def test_registry_path_required(self, tmp_path):
        path = _write_config(tmp_path, {})
        with pytest.raises(ConfigError, match="registry"):
            load_engine_config(path)

    def test_dangling_backend_ref(self, tmp_path):
        _minimal_registry(tmp_path, backend_ref="elsewhere")
        _empty_scenario(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
            },
        )
        with pytest.raises(ValidationError, match="elsewhere"):
            load_engine_config(path)

    def test_unknown_backend_kind(self, tmp_path):
        _minimal_registry(tmp_path)
        path = _write_config(
            tmp_path,
            {"registry": "registry.json", "backends": {"scripted": {"kind": "smoke"}}},
        )
        with pytest.raises(ConfigError, match="unknown kind"):
            load_engine_config(path)

    def test_scripted_backend_needs_scenario(self, tmp_path):
        _minimal_registry(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {"scripted": {"kind": "scripted"}},
            },
        )
        with pytest.raises(ConfigError, match="scenario"):
            load_engine_config(path)

    def test_unknown_agent(self, tmp_path):
        _minimal_registry(tmp_path)
        _empty_scenario(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
                "agents": ["ORACLE"],
            },
        )
        with pytest.raises(ConfigError, match="unknown agent"):
            load_engine_config(path)

    def test_unknown_convergence(self, tmp_path):
        _minimal_registry(tmp_path)
        _empty_scenario(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
                "convergence": "VIBES",
            },
        )
        with pytest.raises(ConfigError, match="convergence"):
            load_engine_config(path)

    def test_bad_max_attempts(self, tmp_path):
        _minimal_registry(tmp_path)
        _empty_scenario(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
                "max_attempts": 0,
            },
        )
        with pytest.raises(ConfigError, match="max_attempts"):
            load_engine_config(path)


class TestDefaultsAndSections:
    def test_defaults_without_optional_sections(self, tmp_path):
        _minimal_registry(tmp_path)
        _empty_scenario(tmp_path)
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
            },
        )
        cfg = load_engine_config(path)
        assert cfg.deps.filter == default_filter_config()
        assert "python" in cfg.deps.toolchains
        assert len(cfg.deps.agents) == 5
        assert cfg.deps.fact_bases == {}
        assert cfg.deps.lint_rules == {}
        assert cfg.deps.few_shots == ()
        assert cfg.deps.vocabulary is None

    def test_http_backend_built_from_doc(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DEMO_KEY", "sekrit")
        _minimal_registry(tmp_path, backend_ref="remote")
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "remote": {
                        "kind": "http",
                        "url": "http://localhost:1/v1/chat",
                        "api_key_env": "DEMO_KEY",
                        "timeout": 5,
                    }
                },
            },
        )
        cfg = load_engine_config(path)
        assert isinstance(cfg.deps.backends["remote"], HttpBackend)

    def test_full_config_wires_everything(self, tmp_path):
        _minimal_registry(tmp_path)
        _empty_scenario(tmp_path)
        (tmp_path / "facts.json").write_text(
            json.dumps(
                {
                    "language": "python",
                    "facts": [
                        {
                            "fact_id": "py-indent",
                            "statement": "blocks are delimited by indentation",
                            "negations": ["blocks are delimited by braces"],
                        }
                    ],
                }
            )
        )
        (tmp_path / "lint.json").write_text(
            json.dumps(
                {
                    "pairs": {
                        "java->python": {
                            "leak_keywords": ["System.out"],
                            "ratio_min": 0.4,
                        }
                    }
                }
            )
        )
        (tmp_path / "shots.json").write_text(
            json.dumps(
                {
                    "shots": [
                        {
                            "source_lang": "java",
                            "target_lang": "python",
                            "source_code": "int x = 1;",
                            "target_code": "x = 1",
                        }
                    ]
                }
            )
        )
        path = _write_config(
            tmp_path,
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
                "fact_bases": {"python": "facts.json"},
                "lint_rules": "lint.json",
                "few_shots": "shots.json",
                "vocabulary": {"iteration": "loops over a collection"},
                "max_attempts": 3,
                "convergence": "COMPILE_ONLY",
            },
        )
        cfg = load_engine_config(path)
        assert isinstance(cfg.deps.fact_bases["python"], FactBase)
        assert "java->python" in cfg.deps.lint_rules
        assert cfg.deps.few_shots[0].source_lang == "java"
        assert cfg.deps.vocabulary == {"iteration": "loops over a collection"}
        assert cfg.max_attempts == 3
        assert cfg.convergence is ConvergenceMode.COMPILE_ONLY

    def test_few_shots_loader_rejects_bad_entries(self, tmp_path):
        path = tmp_path / "shots.json"
        path.write_text(json.dumps({"shots": [{"source_lang": "java"}]}))
        with pytest.raises(ConfigError, match="few-shot"):
            load_few_shots(path)
