"""Per-task translation loop: a pure state machine plus the drivers.

One task is one sequential machine walking INIT, SELECT, TRANSLATE,
VERIFY, COMPILE, FEEDBACK and ending in DONE or FAILED. The `step`
function owns the legal transitions and nothing else; `translate` drives
it against real model backends and toolchains, appending every event to a
ledger; `replay` drives the same loop from a recorded ledger, feeding back
the recorded responses and results instead of calling anything live.

Side effects (LLM calls, compiles, test runs) go through an effects seam
so the three drivers share one decision path. That shared path is what
makes replay verification meaningful: a divergence is a logic change, not
an artifact of a second code path.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .agents import (
    AgentContext,
    AgentKind,
    AgentVerdict,
    ConceptBlueprint,
    FactBase,
    Hint,
    HintKind,
    HintPolarity,
    LintConfig,
    Verdict,
    agents_pass,
    explain_concepts,
    run_agents,
)
from .codeblocks import extract_code_block
from .compilers import (
    CompileResult,
    CompileStatus,
    Diagnostic,
    Severity,
    TestReport,
    TestStatus,
    ToolchainConfig,
    compile_source,
    run_tests,
)
from .director import (
    OBS_AGENTS_FAIL,
    OBS_AGENTS_PASS,
    OBS_COMPILE_ERR,
    OBS_COMPILE_OK,
    OBS_TESTS_FAIL,
    OBS_TESTS_PASS,
    ActionKind,
    BeliefState,
    DirectorAction,
    FilterConfig,
    NEUTRAL_SUGGESTION,
    Observation,
    belief_update,
    select_action,
    uniform_belief,
)
from .errors import (
    BackendError,
    ConfigError,
    DegenerateUpdateError,
    IllegalTransitionError,
    LedgerParseError,
    NoCandidateError,
    NoCodeBlockError,
    ReplayDivergenceError,
    ValidationError,
)
from .gateway import Backend, BoundModel, ChatResponse
from .ledger import (
    TERMINAL_KINDS,
    VERIFIED_KINDS,
    LedgerEvent,
    LedgerKind,
    MemoryLedger,
    utc_now,
)
from .ledger import read_ledger
from .prompts import (
    FewShotExample,
    PromptTemplate,
    build_refinement_prompt,
    build_translation_prompt,
    derive_hints,
)
from .registry import Registry, rank_models

__all__ = [
    "ConvergenceMode",
    "EngineDeps",
    "LiveEffects",
    "OutcomeStatus",
    "Phase",
    "PipelineEvent",
    "PipelineState",
    "ReplayEffects",
    "TranslationOutcome",
    "TranslationTask",
    "extract_code_block",
    "initial_state",
    "replay",
    "step",
    "translate",
]


class Phase(str, Enum):
    INIT = "INIT"
    SELECT = "SELECT"
    TRANSLATE = "TRANSLATE"
    VERIFY = "VERIFY"
    COMPILE = "COMPILE"
    FEEDBACK = "FEEDBACK"
    DONE = "DONE"
    FAILED = "FAILED"


TERMINAL_PHASES = frozenset({Phase.DONE, Phase.FAILED})


class ConvergenceMode(str, Enum):
    COMPILE_ONLY = "COMPILE_ONLY"
    COMPILE_AND_AGENTS = "COMPILE_AND_AGENTS"
    COMPILE_AGENTS_TESTS = "COMPILE_AGENTS_TESTS"


class OutcomeStatus(str, Enum):
    SUCCESS = "SUCCESS"
    FAILED_BUDGET = "FAILED_BUDGET"
    FAILED_ABORT = "FAILED_ABORT"
    FAILED_INFRA = "FAILED_INFRA"


@dataclass(frozen=True)
class TranslationTask:
    task_id: str
    source_lang: str
    target_lang: str
    source_code: str
    max_attempts: int = 5
    convergence: ConvergenceMode = ConvergenceMode.COMPILE_AND_AGENTS

    def __post_init__(self):
        if not self.task_id:
            raise ValidationError("task_id must be non-empty")
        if self.source_lang == self.target_lang:
            raise ValidationError("source and target language must differ")
        if not self.source_code.strip():
            raise ValidationError("source_code must be non-empty")
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be positive")


@dataclass(frozen=True)
class TranslationOutcome:
    status: OutcomeStatus
    attempts_used: int
    final_code: str | None = None
    ledger_path: str | None = None

    def __post_init__(self):
        if self.status is OutcomeStatus.SUCCESS:
            if self.final_code is None:
                raise ValidationError("SUCCESS outcome requires final_code")
            if self.attempts_used < 1:
                raise ValidationError("SUCCESS requires at least one attempt")


@dataclass(frozen=True)
class PipelineState:
    phase: Phase
    belief: BeliefState
    max_attempts: int = 5
    attempt_no: int = 0
    current_model: str | None = None
    used_models: frozenset = frozenset()
    last_output: str | None = None
    pending_hints: tuple[Hint, ...] = ()

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be positive")
        if not 0 <= self.attempt_no <= self.max_attempts:
            raise ValidationError(
                f"attempt_no {self.attempt_no} outside [0, {self.max_attempts}]"
            )
        if self.phase is Phase.DONE and self.last_output is None:
            raise ValidationError("DONE requires a final output")
        if self.current_model is not None and self.current_model not in self.used_models:
            raise ValidationError("current_model must appear in used_models")


@dataclass(frozen=True)
class PipelineEvent:
    """One input symbol for `step`; fields beyond `kind` feed the branch
    that consumes them and are ignored elsewhere."""

    kind: LedgerKind
    model_id: str | None = None
    code: str | None = None
    verdicts: tuple[AgentVerdict, ...] = ()
    hints: tuple[Hint, ...] = ()
    action: DirectorAction | None = None
    belief: BeliefState | None = None


def initial_state(task: TranslationTask, belief: BeliefState) -> PipelineState:
    return PipelineState(
        phase=Phase.INIT, belief=belief, max_attempts=task.max_attempts
    )


def step(state: PipelineState, event: PipelineEvent) -> PipelineState:
    """Pure transition function; anything off the table is an orchestrator
    bug and raises IllegalTransitionError."""
    phase, kind = state.phase, event.kind
    if phase is Phase.INIT and kind is LedgerKind.TASK_START:
        return replace(state, phase=Phase.SELECT)
    if phase is Phase.SELECT and kind is LedgerKind.MODEL_SELECTED:
        if not event.model_id:
            raise IllegalTransitionError(
                phase.value, kind.value, "MODEL_SELECTED requires a model_id"
            )
        if state.attempt_no >= state.max_attempts:
            raise IllegalTransitionError(
                phase.value, kind.value, "attempt budget exhausted"
            )
        return replace(
            state,
            phase=Phase.TRANSLATE,
            attempt_no=state.attempt_no + 1,
            current_model=event.model_id,
            used_models=state.used_models | {event.model_id},
            last_output=None,
            pending_hints=(),
        )
    if phase is Phase.TRANSLATE and kind is LedgerKind.LLM_RESPONSE:
        if event.code is not None:
            return replace(state, phase=Phase.VERIFY, last_output=event.code)
        # nothing extractable: skip verification, the failed attempt goes
        # straight to feedback carrying the reason as a hint
        return replace(
            state, phase=Phase.FEEDBACK, pending_hints=tuple(event.hints)
        )
    if phase is Phase.VERIFY and kind is LedgerKind.AGENT_VERDICT:
        return replace(state, phase=Phase.COMPILE)
    if phase is Phase.COMPILE and kind is LedgerKind.COMPILE_RESULT:
        return replace(
            state, phase=Phase.FEEDBACK, pending_hints=tuple(event.hints)
        )
    if phase is Phase.FEEDBACK and kind is LedgerKind.ACTION_CHOSEN:
        if event.action is None:
            raise IllegalTransitionError(
                phase.value, kind.value, "ACTION_CHOSEN requires an action"
            )
        belief = event.belief if event.belief is not None else state.belief
        action = event.action
        if action.kind is ActionKind.ACCEPT:
            if state.last_output is None:
                raise IllegalTransitionError(
                    phase.value, kind.value, "nothing to accept"
                )
            return replace(state, phase=Phase.DONE, belief=belief)
        if action.kind is ActionKind.REFINE:
            if state.attempt_no >= state.max_attempts:
                raise IllegalTransitionError(
                    phase.value, kind.value, "attempt budget exhausted"
                )
            return replace(
                state,
                phase=Phase.TRANSLATE,
                attempt_no=state.attempt_no + 1,
                belief=belief,
            )
        if action.kind is ActionKind.RESELECT:
            return replace(state, phase=Phase.SELECT, belief=belief)
        if action.kind is ActionKind.ABORT:
            return replace(state, phase=Phase.FAILED, belief=belief)
        raise IllegalTransitionError(
            phase.value, kind.value, f"action {action.kind.value} not legal here"
        )
    raise IllegalTransitionError(phase.value, kind.value)


# =========================================================================
# Ledger payload codecs
# =========================================================================


def response_to_doc(resp: ChatResponse) -> dict:
    return {
        "request_id": resp.request_id,
        "model_id": resp.model_id,
        "content": resp.content,
        "finish_reason": resp.finish_reason,
        "prompt_tokens": resp.prompt_tokens,
        "completion_tokens": resp.completion_tokens,
        "latency_ms": resp.latency_ms,
    }


def response_from_doc(doc: Mapping) -> ChatResponse:
    return ChatResponse(
        request_id=doc["request_id"],
        model_id=doc["model_id"],
        content=doc["content"],
        finish_reason=doc.get("finish_reason", "stop"),
        prompt_tokens=doc.get("prompt_tokens", 0),
        completion_tokens=doc.get("completion_tokens", 0),
        latency_ms=doc.get("latency_ms", 0.0),
    )


def _diag_to_doc(d: Diagnostic) -> dict:
    return {
        "severity": d.severity.value,
        "message": d.message,
        "file": d.file,
        "line": d.line,
        "column": d.column,
        "code": d.code,
    }


def _diag_from_doc(doc: Mapping) -> Diagnostic:
    return Diagnostic(
        severity=Severity(doc["severity"]),
        message=doc["message"],
        file=doc.get("file", ""),
        line=doc.get("line", 0),
        column=doc.get("column", 0),
        code=doc.get("code"),
    )


def compile_result_to_doc(result: CompileResult) -> dict:
    return {
        "status": result.status.value,
        "diagnostics": [_diag_to_doc(d) for d in result.diagnostics],
        "raw_output": result.raw_output,
        "duration_ms": result.duration_ms,
        "workdir": result.workdir,
    }


def compile_result_from_doc(doc: Mapping) -> CompileResult:
    return CompileResult(
        status=CompileStatus(doc["status"]),
        diagnostics=tuple(_diag_from_doc(d) for d in doc.get("diagnostics", [])),
        raw_output=doc.get("raw_output", ""),
        duration_ms=doc.get("duration_ms", 0.0),
        workdir=doc.get("workdir"),
    )


def test_report_to_doc(report: TestReport) -> dict:
    return {
        "status": report.status.value,
        "passed": report.passed,
        "failed": report.failed,
        "raw_output": report.raw_output,
    }


def test_report_from_doc(doc: Mapping) -> TestReport:
    return TestReport(
        status=TestStatus(doc["status"]),
        passed=doc.get("passed", 0),
        failed=doc.get("failed", 0),
        raw_output=doc.get("raw_output", ""),
    )


def _hint_to_doc(h: Hint) -> dict:
    return {
        "kind": h.kind.value,
        "message": h.message,
        "polarity": h.polarity.value,
        "snippet": h.snippet,
    }


def verdict_to_doc(v: AgentVerdict) -> dict:
    return {
        "agent": v.agent.value,
        "verdict": v.verdict.value,
        "hints": [_hint_to_doc(h) for h in v.hints],
        "payload": v.payload,
    }


# =========================================================================
# Effects seam
# =========================================================================


class Effects(Protocol):
    def backend_for(self, ref: str, live: Mapping[str, Backend]) -> Backend: ...

    def compile(
        self, code: str, cfg: ToolchainConfig, *, keep_artifacts: bool = False
    ) -> CompileResult: ...

    def tests(
        self, program: str, tests: str, cfg: ToolchainConfig
    ) -> TestReport: ...


class LiveEffects:
    """Real backends, real toolchains."""

    def backend_for(self, ref: str, live: Mapping[str, Backend]) -> Backend:
        try:
            return live[ref]
        except KeyError:
            raise ConfigError(f"no backend configured for ref {ref!r}") from None

    def compile(
        self, code: str, cfg: ToolchainConfig, *, keep_artifacts: bool = False
    ) -> CompileResult:
        return compile_source(code, cfg, keep_artifacts=keep_artifacts)

    def tests(self, program: str, tests: str, cfg: ToolchainConfig) -> TestReport:
        return run_tests(program, tests, cfg)


class _RecordedBackend:
    def __init__(self, responses: deque):
        self._responses = responses

    def complete(self, request) -> ChatResponse:
        if not self._responses:
            raise ReplayDivergenceError(
                0,
                LedgerKind.LLM_RESPONSE.value,
                None,
                "model call beyond the recorded history",
            )
        _seq, payload = self._responses.popleft()
        return response_from_doc(payload)


class ReplayEffects:
    """Feed recorded exchanges and tool results back through the driver."""

    def __init__(self, events: Sequence[LedgerEvent]):
        self._responses = deque(
            (e.seq, e.payload)
            for e in events
            if e.kind is LedgerKind.LLM_RESPONSE
        )
        self._compiles = deque(
            (e.seq, e.payload)
            for e in events
            if e.kind is LedgerKind.COMPILE_RESULT
        )
        self._tests = deque(
            (e.seq, e.payload)
            for e in events
            if e.kind is LedgerKind.TEST_REPORT
        )
        self._backend = _RecordedBackend(self._responses)

    def backend_for(self, ref: str, live: Mapping[str, Backend]) -> Backend:
        return self._backend

    def compile(
        self, code: str, cfg: ToolchainConfig, *, keep_artifacts: bool = False
    ) -> CompileResult:
        if not self._compiles:
            raise ReplayDivergenceError(
                0,
                LedgerKind.COMPILE_RESULT.value,
                None,
                "compile call beyond the recorded history",
            )
        _seq, payload = self._compiles.popleft()
        return compile_result_from_doc(payload)

    def tests(self, program: str, tests: str, cfg: ToolchainConfig) -> TestReport:
        if not self._tests:
            raise ReplayDivergenceError(
                0,
                LedgerKind.TEST_REPORT.value,
                None,
                "test run beyond the recorded history",
            )
        _seq, payload = self._tests.popleft()
        return test_report_from_doc(payload)


# =========================================================================
# Dependencies
# =========================================================================

DEFAULT_AGENTS = (
    AgentKind.EXPLAINER,
    AgentKind.CONCEPT_VERIFIER,
    AgentKind.FACT_CHECKER,
    AgentKind.TEST_GENERATOR,
    AgentKind.ARTIFACT_LINTER,
)


@dataclass
class EngineDeps:
    """Everything `translate` needs beyond the task itself."""

    registry: Registry
    filter: FilterConfig
    toolchains: Mapping[str, ToolchainConfig]
    backends: Mapping[str, Backend] = field(default_factory=dict)
    agents: tuple[AgentKind, ...] = DEFAULT_AGENTS
    fact_bases: Mapping[str, FactBase] = field(default_factory=dict)
    lint_rules: Mapping[str, LintConfig] = field(default_factory=dict)
    vocabulary: Mapping[str, str] | None = None
    translation_template: PromptTemplate | None = None
    refinement_template: PromptTemplate | None = None
    few_shots: tuple[FewShotExample, ...] = ()
    keep_artifacts: bool = False


# =========================================================================
# Live driver
# =========================================================================


def _fail(
    ledger, state: PipelineState, status: OutcomeStatus, reason: str
) -> TranslationOutcome:
    ledger.append(
        LedgerKind.TASK_FAILED,
        {
            "status": status.value,
            "attempts_used": state.attempt_no,
            "reason": reason,
        },
    )
    return TranslationOutcome(
        status=status,
        attempts_used=state.attempt_no,
        ledger_path=str(ledger.path) if ledger.path else None,
    )


def _observe(
    mode: ConvergenceMode,
    extraction_failed: bool,
    compile_result: CompileResult | None,
    verdicts: Sequence[AgentVerdict],
    test_report: TestReport | None,
) -> tuple[str, bool]:
    """Map one attempt's evidence to a single observation symbol plus the
    accept-eligibility flag.

    Failure masking runs deepest-first: a compile failure hides test and
    agent signals, a test failure hides agent signals. The success symbol
    is the deepest stage the convergence mode demands.
    """
    if extraction_failed or compile_result is None:
        return OBS_COMPILE_ERR, False
    if compile_result.status is not CompileStatus.OK:
        return OBS_COMPILE_ERR, False
    if mode is ConvergenceMode.COMPILE_ONLY:
        return OBS_COMPILE_OK, True
    ok_agents = agents_pass(verdicts)
    if mode is ConvergenceMode.COMPILE_AND_AGENTS:
        return (OBS_AGENTS_PASS, True) if ok_agents else (OBS_AGENTS_FAIL, False)
    if test_report is None or test_report.status is not TestStatus.ALL_PASS:
        return OBS_TESTS_FAIL, False
    if not ok_agents:
        return OBS_AGENTS_FAIL, False
    return OBS_TESTS_PASS, True


def _generated_tests(verdicts: Sequence[AgentVerdict]) -> str | None:
    for v in verdicts:
        if v.agent is AgentKind.TEST_GENERATOR and v.payload.strip():
            return v.payload
    return None


def _blueprint_text(blueprint: ConceptBlueprint | None) -> str | None:
    if blueprint is None:
        return None
    parts = []
    if blueprint.concepts:
        parts.append("Concepts: " + ", ".join(blueprint.concept_ids()))
    if blueprint.narrative:
        parts.append(blueprint.narrative)
    return "\n".join(parts) or None


_LOW_CONFIDENCE_HINT = Hint(
    kind=HintKind.STYLE,
    message=(
        "verification passed but confidence in the translation is still "
        "low; re-check the output against the source for subtle semantic "
        "drift and produce an improved version"
    ),
    polarity=HintPolarity.INSTRUCTION,
)


def translate(
    task: TranslationTask,
    deps: EngineDeps,
    ledger,
    effects: Effects | None = None,
) -> TranslationOutcome:
    """Run one task to a terminal phase, recording everything.

    Infrastructure problems (missing toolchain or backend, exhausted
    retries, broken filter tables) resolve to a FAILED_INFRA outcome with
    a terminal ledger event rather than an exception.
    """
    effects = effects if effects is not None else LiveEffects()
    state = initial_state(task, uniform_belief(deps.filter.space))
    ledger.append(
        LedgerKind.TASK_START,
        {
            "source_lang": task.source_lang,
            "target_lang": task.target_lang,
            "source_code": task.source_code,
            "max_attempts": task.max_attempts,
            "convergence": task.convergence.value,
        },
    )
    state = step(state, PipelineEvent(kind=LedgerKind.TASK_START))
    try:
        return _drive(task, deps, ledger, effects, state)
    except (
        BackendError,
        ConfigError,
        NoCandidateError,
        DegenerateUpdateError,
    ) as exc:
        return _fail(
            ledger, state, OutcomeStatus.FAILED_INFRA,
            f"{type(exc).__name__}: {exc}",
        )


def _drive(
    task: TranslationTask,
    deps: EngineDeps,
    ledger,
    effects: Effects,
    state: PipelineState,
) -> TranslationOutcome:
    toolchain = deps.toolchains.get(task.target_lang)
    if toolchain is None:
        return _fail(
            ledger,
            state,
            OutcomeStatus.FAILED_INFRA,
            f"no toolchain configured for target language {task.target_lang!r}",
        )
    ranked = rank_models(deps.registry, task.source_lang, task.target_lang)
    ranked_ids = [r.model_id for r in ranked]
    scores = {r.model_id: r.score for r in ranked}
    tests_wanted = task.convergence is ConvergenceMode.COMPILE_AGENTS_TESTS
    active_agents = tuple(
        a
        for a in deps.agents
        if a is not AgentKind.TEST_GENERATOR or tests_wanted
    )
    shots = tuple(
        s
        for s in deps.few_shots
        if (s.source_lang, s.target_lang) == (task.source_lang, task.target_lang)
    )
    vocabulary = deps.vocabulary

    def record_exchange(_request, response):
        ledger.append(LedgerKind.LLM_RESPONSE, response_to_doc(response))

    counter_owner: BoundModel | None = None

    def bound_for(model_id: str) -> BoundModel:
        nonlocal counter_owner
        profile = deps.registry.get(model_id)
        backend = effects.backend_for(profile.backend_ref, deps.backends)
        bound = BoundModel(
            backend=backend,
            model_id=model_id,
            id_prefix=f"{task.task_id}-r",
            on_exchange=record_exchange,
        )
        if counter_owner is None:
            counter_owner = bound
        else:
            bound.share_counter_with(counter_owner)
        return bound

    bound: BoundModel | None = None
    next_model = ranked_ids[0]
    prev_action: DirectorAction | None = None
    blueprint: ConceptBlueprint | None = None
    blueprint_tried = False
    refine_inputs: tuple[str, tuple[Hint, ...], tuple[Diagnostic, ...]] | None = None
    last_raw: str | None = None
    extraction_failed = False
    verdicts: tuple[AgentVerdict, ...] = ()
    compile_result: CompileResult | None = None
    test_report: TestReport | None = None
    obs_ref: str | None = None

    while state.phase not in TERMINAL_PHASES:
        if state.phase is Phase.SELECT:
            model_id = next_model
            bound = bound_for(model_id)
            if prev_action is None:
                prev_action = DirectorAction(
                    kind=ActionKind.SELECT_MODEL, model_id=model_id
                )
            refine_inputs = None
            last_raw = None
            ledger.append(
                LedgerKind.MODEL_SELECTED,
                {
                    "model_id": model_id,
                    "score": scores[model_id],
                    "attempt_no": state.attempt_no + 1,
                },
            )
            state = step(
                state,
                PipelineEvent(kind=LedgerKind.MODEL_SELECTED, model_id=model_id),
            )

        elif state.phase is Phase.TRANSLATE:
            verdicts = ()
            compile_result = None
            test_report = None
            extraction_failed = False
            obs_ref = None
            if (
                not blueprint_tried
                and AgentKind.CONCEPT_VERIFIER in active_agents
            ):
                blueprint_tried = True
                try:
                    blueprint = explain_concepts(
                        task.source_code, task.source_lang, bound
                    )
                except BackendError:
                    blueprint = None
            if refine_inputs is not None:
                previous_output, prompt_hints, diags = refine_inputs
                messages = build_refinement_prompt(
                    task,
                    previous_output=previous_output,
                    hints=prompt_hints,
                    diagnostics=diags,
                    template=deps.refinement_template,
                )
                mode = "refinement"
            else:
                messages = build_translation_prompt(
                    task,
                    blueprint=_blueprint_text(blueprint),
                    shots=shots,
                    template=deps.translation_template,
                )
                mode = "translation"
            ledger.append(
                LedgerKind.PROMPT_BUILT,
                {
                    "mode": mode,
                    "attempt_no": state.attempt_no,
                    "model_id": state.current_model,
                    "chars": len(messages[1].content),
                },
            )
            response = bound.send(messages)
            last_raw = response.content
            try:
                code = extract_code_block(response.content, task.target_lang)
            except NoCodeBlockError as exc:
                extraction_failed = True
                hint = Hint(
                    kind=HintKind.STYLE,
                    message=(
                        f"the last reply had no usable code block ({exc}); "
                        f"reply with exactly one fenced code block tagged "
                        f"{task.target_lang}"
                    ),
                    polarity=HintPolarity.INSTRUCTION,
                )
                state = step(
                    state,
                    PipelineEvent(kind=LedgerKind.LLM_RESPONSE, hints=(hint,)),
                )
            else:
                state = step(
                    state, PipelineEvent(kind=LedgerKind.LLM_RESPONSE, code=code)
                )

        elif state.phase is Phase.VERIFY:
            ctx_kwargs = dict(
                source_code=task.source_code,
                translated_code=state.last_output,
                source_lang=task.source_lang,
                target_lang=task.target_lang,
                bound=bound,
                fact_bases=deps.fact_bases,
                lint_rules=deps.lint_rules,
                blueprint=blueprint,
            )
            if vocabulary is not None:
                ctx_kwargs["vocabulary"] = vocabulary
            batch = (
                run_agents(AgentContext(**ctx_kwargs), active_agents)
                if active_agents
                else []
            )
            for verdict in batch:
                ledger.append(LedgerKind.AGENT_VERDICT, verdict_to_doc(verdict))
            verdicts = tuple(batch)
            state = step(
                state,
                PipelineEvent(kind=LedgerKind.AGENT_VERDICT, verdicts=verdicts),
            )

        elif state.phase is Phase.COMPILE:
            compile_result = effects.compile(
                state.last_output, toolchain, keep_artifacts=deps.keep_artifacts
            )
            event = ledger.append(
                LedgerKind.COMPILE_RESULT, compile_result_to_doc(compile_result)
            )
            obs_ref = str(event.seq)
            if compile_result.status is CompileStatus.TOOL_MISSING:
                return _fail(
                    ledger,
                    state,
                    OutcomeStatus.FAILED_INFRA,
                    compile_result.raw_output or "toolchain tool missing",
                )
            if tests_wanted and compile_result.status is CompileStatus.OK:
                test_code = _generated_tests(verdicts)
                if test_code is not None:
                    test_report = effects.tests(
                        state.last_output, test_code, toolchain
                    )
                    ledger.append(
                        LedgerKind.TEST_REPORT, test_report_to_doc(test_report)
                    )
            hints = derive_hints(compile_result, verdicts)
            if (
                test_report is not None
                and test_report.status is not TestStatus.ALL_PASS
            ):
                hints = hints + (
                    Hint(
                        kind=HintKind.LOGIC_REMOVED,
                        message=(
                            f"generated tests: {test_report.failed} failing, "
                            f"{test_report.passed} passing (status "
                            f"{test_report.status.value}); make the "
                            f"translation behave like the source"
                        ),
                        polarity=HintPolarity.INSTRUCTION,
                    ),
                )
            state = step(
                state, PipelineEvent(kind=LedgerKind.COMPILE_RESULT, hints=hints)
            )

        elif state.phase is Phase.FEEDBACK:
            obs_kind, eligible = _observe(
                task.convergence,
                extraction_failed,
                compile_result,
                verdicts,
                test_report,
            )
            belief = belief_update(
                state.belief,
                prev_action,
                Observation(kind=obs_kind, payload_ref=obs_ref),
                NEUTRAL_SUGGESTION,
                deps.filter.obs_model,
                deps.filter.trans_model,
            )
            ledger.append(
                LedgerKind.BELIEF_UPDATED,
                {
                    "step": belief.step,
                    "probs": list(belief.probs),
                    "observation": obs_kind,
                    "suggestion": NEUTRAL_SUGGESTION.kind,
                    "action": prev_action.kind.value,
                    "payload_ref": obs_ref,
                },
            )
            attempts_left = task.max_attempts - state.attempt_no
            action = select_action(
                belief,
                deps.filter.policy,
                ranked_ids,
                attempts_left,
                state.current_model,
                used_models=state.used_models,
                accept_eligible=eligible,
            )
            ledger.append(
                LedgerKind.ACTION_CHOSEN,
                {
                    "kind": action.kind.value,
                    "model_id": action.model_id,
                    "attempts_left": attempts_left,
                    "accept_eligible": eligible,
                },
            )
            if action.kind is ActionKind.RESELECT:
                next_model = action.model_id
            elif action.kind is ActionKind.REFINE:
                previous_output = (
                    state.last_output
                    if state.last_output is not None
                    else (last_raw or "")
                )
                prompt_hints = tuple(
                    h
                    for h in state.pending_hints
                    if h.kind is not HintKind.COMPILER_DIRECTED
                )
                diags = (
                    compile_result.error_diagnostics()
                    if compile_result is not None
                    else ()
                )
                if not prompt_hints and not diags:
                    prompt_hints = (_LOW_CONFIDENCE_HINT,)
                refine_inputs = (previous_output, prompt_hints, diags)
            prev_action = action
            state = step(
                state,
                PipelineEvent(
                    kind=LedgerKind.ACTION_CHOSEN, action=action, belief=belief
                ),
            )

        else:  # pragma: no cover - the loop condition excludes terminals
            raise IllegalTransitionError(state.phase.value, "<driver>")

    if state.phase is Phase.DONE:
        ledger.append(
            LedgerKind.TASK_DONE,
            {
                "status": OutcomeStatus.SUCCESS.value,
                "attempts_used": state.attempt_no,
                "model_id": state.current_model,
                "final_code": state.last_output,
            },
        )
        return TranslationOutcome(
            status=OutcomeStatus.SUCCESS,
            attempts_used=state.attempt_no,
            final_code=state.last_output,
            ledger_path=str(ledger.path) if ledger.path else None,
        )
    if state.attempt_no >= task.max_attempts:
        status, reason = OutcomeStatus.FAILED_BUDGET, "attempt budget exhausted"
    else:
        status, reason = (
            OutcomeStatus.FAILED_ABORT,
            "confidence fell below the abort floor",
        )
    return _fail(ledger, state, status, reason)


# =========================================================================
# Replay driver
# =========================================================================


def _normalize_payload(payload: dict) -> dict:
    return json.loads(json.dumps(payload))


class _ReplayLedger(MemoryLedger):
    """Memory ledger that checks recomputed decision events against the
    recorded ones as they are appended, stopping at the first divergence."""

    def __init__(
        self,
        task_id: str,
        recorded: Sequence[LedgerEvent],
        verify: bool,
        clock=utc_now,
    ):
        super().__init__(task_id, clock)
        self._expected = [e for e in recorded if e.kind in VERIFIED_KINDS]
        self._verify = verify
        self._cursor = 0

    def append(self, kind: LedgerKind, payload: dict) -> LedgerEvent:
        event = super().append(kind, payload)
        if not self._verify or kind not in VERIFIED_KINDS:
            return event
        actual = _normalize_payload(payload)
        if self._cursor >= len(self._expected):
            raise ReplayDivergenceError(event.seq, kind.value, None, actual)
        expected = self._expected[self._cursor]
        self._cursor += 1
        if expected.kind is not kind or expected.payload != actual:
            raise ReplayDivergenceError(
                expected.seq, kind.value, expected.payload, actual
            )
        return event


def replay(
    ledger_path: str | Path, deps: EngineDeps, verify: bool = True
) -> TranslationOutcome:
    """Re-run a recorded task without touching backends or toolchains.

    With verify on, every recomputed MODEL_SELECTED, BELIEF_UPDATED, and
    ACTION_CHOSEN event must equal the recorded one; the first mismatch
    raises ReplayDivergenceError carrying both versions.
    """
    events = read_ledger(ledger_path)
    first = events[0]
    if first.kind is not LedgerKind.TASK_START:
        raise LedgerParseError(
            f"{ledger_path}: ledger does not begin with TASK_START"
        )
    if events[-1].kind not in TERMINAL_KINDS:
        raise LedgerParseError(
            f"{ledger_path}: ledger has no terminal event (truncated run?)"
        )
    payload = first.payload
    try:
        task = TranslationTask(
            task_id=first.task_id,
            source_lang=payload["source_lang"],
            target_lang=payload["target_lang"],
            source_code=payload["source_code"],
            max_attempts=payload["max_attempts"],
            convergence=ConvergenceMode(payload["convergence"]),
        )
    except (KeyError, ValueError) as exc:
        raise LedgerParseError(
            f"{ledger_path}: TASK_START payload incomplete: {exc}"
        ) from None
    effects = ReplayEffects(events)
    mirror = _ReplayLedger(first.task_id, events, verify)
    return translate(task, deps, mirror, effects=effects)
