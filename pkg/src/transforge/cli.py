"""Command-line entry point: translate, bench, registry, simulate, replay.

Exit codes are part of the contract: 0 success, 1 the task itself failed,
2 usage error, 3 infrastructure or configuration error. Machine-readable
output goes to stdout as JSON under --json; logs always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import format_summary_table, load_manifest, run_benchmark
from .config import load_engine_config
from .errors import (
    ConfigError,
    LedgerParseError,
    ReplayDivergenceError,
    TransforgeError,
    UnknownModelError,
    ValidationError,
)
from .gateway import ScriptedBackend, load_scenario
from .ledger import FileLedger, MemoryLedger
from .pipeline import OutcomeStatus, TranslationTask, replay, translate
from .registry import (
    load_registry,
    parse_registry,
    registry_to_doc,
    update_profile,
    write_registry,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_USAGE = 2
EXIT_INFRA = 3

DEMO_DIR = Path(__file__).parent / "data" / "demo"

_STATUS_EXIT = {
    OutcomeStatus.SUCCESS: EXIT_OK,
    OutcomeStatus.FAILED_BUDGET: EXIT_TASK_FAILED,
    OutcomeStatus.FAILED_ABORT: EXIT_TASK_FAILED,
    OutcomeStatus.FAILED_INFRA: EXIT_INFRA,
}


def _err(message: str) -> None:
    print(f"transforge: {message}", file=sys.stderr)


def _emit(args, doc: dict, human: str) -> None:
    if args.json:
        print(json.dumps(doc))
    else:
        print(human)


def _load_config(args):
    return load_engine_config(args.config)


# -------------------------------------------------------------------------
# translate
# -------------------------------------------------------------------------


def _cmd_translate(args) -> int:
    if args.source_lang == args.target_lang:
        _err("--from and --to must differ")
        return EXIT_USAGE
    cfg = _load_config(args)
    source_path = Path(args.source)
    if not source_path.is_file():
        raise ConfigError(f"source file not found: {source_path}")
    task = TranslationTask(
        task_id=source_path.stem,
        source_lang=args.source_lang,
        target_lang=args.target_lang,
        source_code=source_path.read_text(),
        max_attempts=args.max_attempts or cfg.max_attempts,
        convergence=cfg.convergence,
    )
    ledger_path = Path(args.ledger) if args.ledger else Path(f"{task.task_id}.jsonl")
    with FileLedger(task.task_id, ledger_path) as ledger:
        outcome = translate(task, cfg.deps, ledger)
    if outcome.status is OutcomeStatus.SUCCESS and args.out:
        Path(args.out).write_text(outcome.final_code)
    doc = {
        "status": outcome.status.value,
        "attempts_used": outcome.attempts_used,
        "ledger": str(ledger_path),
        "out": args.out if outcome.status is OutcomeStatus.SUCCESS else None,
    }
    human = (
        f"{outcome.status.value}: {task.source_lang}->{task.target_lang} "
        f"in {outcome.attempts_used} attempt(s); ledger {ledger_path}"
    )
    if outcome.status is OutcomeStatus.SUCCESS and not args.out:
        human += "\n" + outcome.final_code
        doc["final_code"] = outcome.final_code
    _emit(args, doc, human)
    return _STATUS_EXIT[outcome.status]


# -------------------------------------------------------------------------
# bench
# -------------------------------------------------------------------------


def _cmd_bench(args) -> int:
    if args.workers < 1:
        _err("--workers must be at least 1")
        return EXIT_USAGE
    manifest = load_manifest(args.manifest)
    cfg = _load_config(args)
    report = run_benchmark(
        manifest,
        cfg.deps,
        args.out_dir,
        workers=args.workers,
        convergence=cfg.convergence,
        max_attempts=cfg.max_attempts,
        config_digest=cfg.digest,
        echo=(lambda line: print(line, file=sys.stderr)) if args.json else print,
    )
    if args.json:
        print(json.dumps(report.to_doc()))
    return EXIT_OK


# -------------------------------------------------------------------------
# registry
# -------------------------------------------------------------------------


def _cmd_registry(args) -> int:
    if args.registry_cmd == "list":
        reg = load_registry(args.registry)
        if args.json:
            print(json.dumps(registry_to_doc(reg)))
            return EXIT_OK
        print(f"registry version {reg.version}, {len(reg.profiles)} model(s)")
        for model_id, p in sorted(reg.profiles.items()):
            scores = ", ".join(f"{k}={v}" for k, v in sorted(p.proficiency.items()))
            print(f"  {model_id}  backend={p.backend_ref}  {scores}")
        return EXIT_OK

    if args.registry_cmd == "add":
        reg = load_registry(args.registry)
        proficiency = {}
        for spec_item in args.proficiency:
            lang, _, score = spec_item.partition("=")
            if not _ or not lang or not score:
                _err(f"--proficiency needs lang=score, got {spec_item!r}")
                return EXIT_USAGE
            try:
                proficiency[lang] = float(score)
            except ValueError:
                _err(f"--proficiency score must be a number, got {score!r}")
                return EXIT_USAGE
        doc = registry_to_doc(reg)
        doc["version"] = reg.version + 1
        doc["models"].append(
            {
                "model_id": args.model_id,
                "display_name": args.display_name or args.model_id,
                "proficiency": proficiency,
                "context_window": args.context_window,
                "backend_ref": args.backend_ref,
            }
        )
        updated = parse_registry(doc)
        write_registry(updated, args.registry)
        _emit(
            args,
            {"model_id": args.model_id, "version": updated.version},
            f"added {args.model_id}; registry now version {updated.version}",
        )
        return EXIT_OK

    reg = load_registry(args.registry)  # set-score
    updated = update_profile(reg, args.model_id, args.lang, args.score)
    write_registry(updated, args.registry)
    _emit(
        args,
        {
            "model_id": args.model_id,
            "lang": args.lang,
            "score": args.score,
            "version": updated.version,
        },
        f"set {args.model_id}.{args.lang} = {args.score}; "
        f"registry now version {updated.version}",
    )
    return EXIT_OK


# -------------------------------------------------------------------------
# simulate
# -------------------------------------------------------------------------


def _trace_lines(events, states) -> list[dict]:
    trace = []
    for event in events:
        if event.kind == "MODEL_SELECTED":
            trace.append(
                {
                    "kind": "model",
                    "attempt": event.payload.get("attempt_no"),
                    "model_id": event.payload.get("model_id"),
                }
            )
        elif event.kind == "BELIEF_UPDATED":
            probs = event.payload.get("probs", [])
            trace.append(
                {
                    "kind": "belief",
                    "observation": event.payload.get("observation"),
                    "belief": dict(zip(states, probs)),
                }
            )
        elif event.kind == "ACTION_CHOSEN":
            trace.append(
                {
                    "kind": "action",
                    "action": event.payload.get("kind"),
                    "model_id": event.payload.get("model_id"),
                }
            )
    return trace


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    scenario = load_scenario(args.scenario)
    shared = ScriptedBackend(scenario)
    refs = {p.backend_ref for p in cfg.deps.registry.profiles.values()}
    deps = replace(cfg.deps, backends={ref: shared for ref in refs})
    source_path = Path(args.source)
    if not source_path.is_file():
        raise ConfigError(f"source file not found: {source_path}")
    task = TranslationTask(
        task_id="simulate",
        source_lang=args.source_lang,
        target_lang=args.target_lang,
        source_code=source_path.read_text(),
        max_attempts=args.max_attempts or cfg.max_attempts,
        convergence=cfg.convergence,
    )
    ledger = MemoryLedger(task.task_id)
    outcome = translate(task, deps, ledger)
    states = cfg.deps.filter.space.states
    trace = _trace_lines(ledger.events, states)
    if args.json:
        print(
            json.dumps(
                {
                    "trace": trace,
                    "status": outcome.status.value,
                    "attempts_used": outcome.attempts_used,
                }
            )
        )
    else:
        for item in trace:
            if item["kind"] == "model":
                print(f"attempt {item['attempt']}: model {item['model_id']}")
            elif item["kind"] == "belief":
                belief = "  ".join(
                    f"{s}={p:.3f}" for s, p in item["belief"].items()
                )
                print(f"  observed {item['observation']}: {belief}")
            else:
                suffix = f" -> {item['model_id']}" if item["model_id"] else ""
                print(f"  action {item['action']}{suffix}")
        print(f"{outcome.status.value} after {outcome.attempts_used} attempt(s)")
    return _STATUS_EXIT[outcome.status]


# -------------------------------------------------------------------------
# replay
# -------------------------------------------------------------------------


def _cmd_replay(args) -> int:
    cfg = _load_config(args)
    try:
        outcome = replay(args.ledger, cfg.deps, verify=args.verify)
    except ReplayDivergenceError as exc:
        doc = {
            "divergence": {
                "seq": exc.seq,
                "kind": exc.kind,
                "expected": exc.expected,
                "actual": exc.actual,
            }
        }
        human = (
            f"replay diverged at seq {exc.seq} ({exc.kind}):\n"
            f"  recorded: {json.dumps(exc.expected)}\n"
            f"  replayed: {json.dumps(exc.actual)}"
        )
        _emit(args, doc, human)
        return EXIT_TASK_FAILED
    doc = {
        "status": outcome.status.value,
        "attempts_used": outcome.attempts_used,
        "verified": args.verify,
    }
    human = (
        f"replayed {args.ledger}: {outcome.status.value} "
        f"after {outcome.attempts_used} attempt(s)"
        + ("; no divergences" if args.verify else "")
    )
    _emit(args, doc, human)
    return _STATUS_EXIT[outcome.status]


# -------------------------------------------------------------------------
# parser plumbing
# -------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transforge",
        description="LLM code translation with belief-driven model routing",
    )
    parser.add_argument(
        "--json", action="store_true", help="machine-readable JSON on stdout"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("translate", help="translate one source file")
    p.add_argument("--source", required=True)
    p.add_argument("--from", dest="source_lang", required=True)
    p.add_argument("--to", dest="target_lang", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--max-attempts", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--ledger", default=None)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("bench", help="run a benchmark manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("registry", help="inspect or edit a model registry")
    reg_sub = p.add_subparsers(dest="registry_cmd", required=True)
    r = reg_sub.add_parser("list")
    r.add_argument("--registry", required=True)
    r.set_defaults(func=_cmd_registry)
    r = reg_sub.add_parser("add")
    r.add_argument("--registry", required=True)
    r.add_argument("--model-id", required=True)
    r.add_argument("--display-name", default=None)
    r.add_argument("--backend-ref", required=True)
    r.add_argument("--context-window", type=int, default=4096)
    r.add_argument(
        "--proficiency",
        action="append",
        default=[],
        metavar="LANG=SCORE",
        help="repeatable",
    )
    r.set_defaults(func=_cmd_registry)
    r = reg_sub.add_parser("set-score")
    r.add_argument("--registry", required=True)
    r.add_argument("--model-id", required=True)
    r.add_argument("--lang", required=True)
    r.add_argument("--score", type=float, required=True)
    r.set_defaults(func=_cmd_registry)

    p = sub.add_parser("simulate", help="run the loop against a scripted scenario")
    p.add_argument("--scenario", default=str(DEMO_DIR / "scenario.json"))
    p.add_argument("--config", default=str(DEMO_DIR / "engine.json"))
    p.add_argument("--source", default=str(DEMO_DIR / "source.java"))
    p.add_argument("--from", dest="source_lang", default="java")
    p.add_argument("--to", dest="target_lang", default="python")
    p.add_argument("--max-attempts", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="re-execute a recorded run from its ledger")
    p.add_argument("--ledger", required=True)
    p.add_argument("--config", default=str(DEMO_DIR / "engine.json"))
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LedgerParseError, ConfigError, ValidationError, UnknownModelError) as exc:
        _err(str(exc))
        return EXIT_INFRA
    except TransforgeError as exc:
        _err(str(exc))
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
