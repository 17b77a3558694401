import json
from pathlib import Path

import pytest

from transforge.bench import (
    BenchmarkManifest,
    format_summary_table,
    load_manifest,
    run_benchmark,
)
from transforge.config import load_engine_config
from transforge.errors import ConfigError, ValidationError
from transforge.ledger import read_ledger

GOOD_BLOCK = "def greet(name):\n    return 'hi ' + name\n\nprint(greet('x'))\n"

SCENARIO = {
    "name": "bench",
    "default_response": "```python\n" + GOOD_BLOCK + "```\n",
    "rules": [
        {
            "contains": "Explain what the following",
            "response": "greet prepends a fixed prefix to its argument and the result is printed.",
        },
        {
            "contains": "FAILME",
            # prose only; the marker rides along into every refinement prompt
            "response": "I could not find a clean mapping for this one. FAILME.",
        },
    ],
}


def _workspace(tmp_path, n_good=3, n_fail=1, reference=False):
    """Manifest + config tree: n_good entries converge, n_fail never do."""
    (tmp_path / "scenario.json").write_text(json.dumps(SCENARIO))
    (tmp_path / "registry.json").write_text(
        json.dumps(
            {
                "version": 1,
                "models": [
                    {
                        "model_id": "alpha",
                        "proficiency": {"java": 0.9, "python": 0.9, "c": 0.9},
                        "backend_ref": "scripted",
                    },
                    {
                        "model_id": "beta",
                        "proficiency": {"java": 0.8, "python": 0.8, "c": 0.8},
                        "backend_ref": "scripted",
                    },
                ],
            }
        )
    )
    (tmp_path / "engine.json").write_text(
        json.dumps(
            {
                "registry": "registry.json",
                "backends": {
                    "scripted": {"kind": "scripted", "scenario": "scenario.json"}
                },
                "agents": ["EXPLAINER"],
            }
        )
    )
    entries = []
    for i in range(n_good):
        src = tmp_path / f"good{i}.java"
        src.write_text("class G {}\n")
        entry = {
            "entry_id": f"good{i}",
            "source_lang": "java" if i % 2 == 0 else "c",
            "target_lang": "python",
            "source_path": src.name,
        }
        if reference and i == 0:
            ref = tmp_path / "ref0.py"
            ref.write_text(GOOD_BLOCK)
            entry["reference_path"] = ref.name
        entries.append(entry)
    for i in range(n_fail):
        src = tmp_path / f"bad{i}.java"
        src.write_text("class B {} // FAILME\n")
        entries.append(
            {
                "entry_id": f"bad{i}",
                "source_lang": "java",
                "target_lang": "python",
                "source_path": src.name,
            }
        )
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(
        json.dumps({"name": "smoke", "entries": entries})
    )
    return manifest_path, tmp_path / "engine.json"


class TestManifestLoading:
    def test_round_trip(self, tmp_path):
        manifest_path, _ = _workspace(tmp_path)
        manifest = load_manifest(manifest_path)
        assert isinstance(manifest, BenchmarkManifest)
        assert manifest.name == "smoke"
        assert len(manifest.entries) == 4
        assert manifest.entries[0].source_path.is_file()

    def test_missing_source_fails_at_load(self, tmp_path):
        manifest_path, _ = _workspace(tmp_path)
        doc = json.loads(manifest_path.read_text())
        doc["entries"][0]["source_path"] = "vanished.java"
        manifest_path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="vanished"):
            load_manifest(manifest_path)

    def test_duplicate_entry_ids(self, tmp_path):
        manifest_path, _ = _workspace(tmp_path)
        doc = json.loads(manifest_path.read_text())
        doc["entries"][1]["entry_id"] = doc["entries"][0]["entry_id"]
        manifest_path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="duplicate"):
            load_manifest(manifest_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_manifest(tmp_path / "none.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{oops")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_manifest(path)

    def test_entries_must_be_a_list(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"entries": "nope"}))
        with pytest.raises(ValidationError, match="entries"):
            load_manifest(path)

    def test_entry_missing_field(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"entries": [{"entry_id": "x"}]}))
        with pytest.raises(ValidationError, match="bad manifest entry"):
            load_manifest(path)


class TestRunBenchmark:
    def test_mixed_run_accounting(self, tmp_path, capsys):
        manifest_path, config_path = _workspace(tmp_path, reference=True)
        manifest = load_manifest(manifest_path)
        cfg = load_engine_config(config_path)
        out_dir = tmp_path / "out"
        report = run_benchmark(
            manifest,
            cfg.deps,
            out_dir,
            workers=2,
            convergence=cfg.convergence,
            max_attempts=cfg.max_attempts,
            config_digest=cfg.digest,
        )
        assert report.totals == {
            "attempted": 4,
            "succeeded": 3,
            "success_rate": 75.0,
        }
        assert report.per_pair["java->python"]["attempted"] == 3
        assert report.per_pair["java->python"]["succeeded"] == 2
        assert report.per_pair["c->python"] == {
            "attempted": 1,
            "succeeded": 1,
            "success_rate": 100.0,
            "mean_codebleu": None,
        }
        # the referenced entry reproduced the reference exactly
        assert report.per_pair["java->python"]["mean_codebleu"] == 1.0
        assert report.config_digest == cfg.digest

        on_disk = json.loads((out_dir / "report.json").read_text())
        assert on_disk == report.to_doc()
        assert (out_dir / "report.csv").read_text().startswith("pair,")
        assert (out_dir / "figures" / "success_rate.png").stat().st_size > 0
        assert (out_dir / "figures" / "attempts.png").stat().st_size > 0

        table = capsys.readouterr().out
        assert "java->python" in table
        assert "75.0%" in table

    def test_success_count_matches_ledger_terminals(self, tmp_path):
        manifest_path, config_path = _workspace(tmp_path)
        manifest = load_manifest(manifest_path)
        cfg = load_engine_config(config_path)
        out_dir = tmp_path / "out"
        report = run_benchmark(
            manifest, cfg.deps, out_dir, workers=3, render_figures=False
        )
        done = 0
        ledger_dir = out_dir / "ledgers"
        assert sorted(p.name for p in ledger_dir.iterdir()) == [
            "bad0.jsonl",
            "good0.jsonl",
            "good1.jsonl",
            "good2.jsonl",
        ]
        for path in ledger_dir.iterdir():
            events = read_ledger(path)
            done += sum(1 for e in events if e.kind == "TASK_DONE")
        assert done == report.totals["succeeded"]

    def test_parallel_matches_serial(self, tmp_path):
        manifest_path, config_path = _workspace(tmp_path, n_good=4, n_fail=2)
        manifest = load_manifest(manifest_path)
        serial = run_benchmark(
            manifest,
            load_engine_config(config_path).deps,
            tmp_path / "serial",
            workers=1,
            render_figures=False,
        )
        parallel = run_benchmark(
            manifest,
            load_engine_config(config_path).deps,
            tmp_path / "parallel",
            workers=4,
            render_figures=False,
        )
        assert serial.to_doc() == parallel.to_doc()

    def test_infra_failures_count_as_attempted(self, tmp_path):
        from dataclasses import replace

        manifest_path, config_path = _workspace(tmp_path, n_good=2, n_fail=0)
        manifest = load_manifest(manifest_path)
        deps = replace(load_engine_config(config_path).deps, toolchains={})
        report = run_benchmark(
            manifest, deps, tmp_path / "out", workers=1, render_figures=False
        )
        assert report.totals == {
            "attempted": 2,
            "succeeded": 0,
            "success_rate": 0.0,
        }
        for path in (tmp_path / "out" / "ledgers").iterdir():
            kinds = [e.kind for e in read_ledger(path)]
            assert kinds[-1] == "TASK_FAILED"

    def test_workers_must_be_positive(self, tmp_path):
        manifest_path, config_path = _workspace(tmp_path, n_good=1, n_fail=0)
        manifest = load_manifest(manifest_path)
        cfg = load_engine_config(config_path)
        with pytest.raises(ValidationError, match="workers"):
            run_benchmark(manifest, cfg.deps, tmp_path / "out", workers=0)

    def test_summary_table_layout(self):
        from transforge.bench import BenchmarkReport

        report = BenchmarkReport(
            name="t",
            per_pair={
                "java->python": {
                    "attempted": 2,
                    "succeeded": 1,
                    "success_rate": 50.0,
                    "mean_codebleu": None,
                }
            },
            totals={"attempted": 2, "succeeded": 1, "success_rate": 50.0},
            config_digest="",
        )
        lines = format_summary_table(report).splitlines()
        assert lines[0].split() == ["Language", "Pair", "Samples", "Success", "Rate"]
        assert set(lines[1]) <= {"-", " "}
        assert lines[2].split() == ["java->python", "2", "50.0%"]
        assert lines[3].split() == ["TOTAL", "2", "50.0%"]
