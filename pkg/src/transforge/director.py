"""Belief tracking and action selection for the translation director.

The director never sees the true health of a translation attempt. It keeps a
discrete probability distribution (a belief) over latent process states and
folds in three evidence factors after each attempt: where the process could
have moved given the last action, how likely the observed build/agent outcome
is in each state, and how likely any advisory suggestion is. Concretely, for
each state s:

    posterior(s)  propto  p_sugg(sg | s) * p_obs(o | s, a) *
                          sum_over_prev( p_trans(s | prev, a) * belief(prev) )

normalized over states. brute_force_posterior computes the same distribution
by enumerating every full state trajectory and marginalizing; it shares no
code with the recursive update on purpose, so the two can check each other.

Action choice is a fixed threshold cascade over the belief, evaluated top to
bottom: budget exhausted, accept, reselect, abort floor, refine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, DegenerateUpdateError, ValidationError

# Default latent states.
ON_TRACK = "ON_TRACK"
MINOR_DEFECTS = "MINOR_DEFECTS"
MODEL_MISMATCH = "MODEL_MISMATCH"
SEMANTIC_DRIFT = "SEMANTIC_DRIFT"
DEFAULT_STATES = (ON_TRACK, MINOR_DEFECTS, MODEL_MISMATCH, SEMANTIC_DRIFT)

# Default observation alphabet. One symbol is emitted per verification loop.
OBS_COMPILE_OK = "COMPILE_OK"
OBS_COMPILE_ERR = "COMPILE_ERR"
OBS_TESTS_PASS = "TESTS_PASS"
OBS_TESTS_FAIL = "TESTS_FAIL"
OBS_AGENTS_PASS = "AGENTS_PASS"
OBS_AGENTS_FAIL = "AGENTS_FAIL"
DEFAULT_OBSERVATIONS = (
    OBS_COMPILE_OK,
    OBS_COMPILE_ERR,
    OBS_TESTS_PASS,
    OBS_TESTS_FAIL,
    OBS_AGENTS_PASS,
    OBS_AGENTS_FAIL,
)

# Default suggestion alphabet. NONE with a uniform likelihood row is the
# neutral element: it scales every state equally and cancels in normalization.
SUGG_KEEP = "KEEP"
SUGG_SWITCH = "SWITCH"
SUGG_SIMPLIFY = "SIMPLIFY"
SUGG_NONE = "NONE"
DEFAULT_SUGGESTIONS = (SUGG_KEEP, SUGG_SWITCH, SUGG_SIMPLIFY, SUGG_NONE)

TABLE_TOLERANCE = 1e-9
BELIEF_TOLERANCE = 1e-12


class ActionKind(str, Enum):
    SELECT_MODEL = "SELECT_MODEL"
    REFINE = "REFINE"
    RESELECT = "RESELECT"
    ACCEPT = "ACCEPT"
    ABORT = "ABORT"


@dataclass(frozen=True)
class StateSpace:
    states: tuple[str, ...] = DEFAULT_STATES

    def __post_init__(self):
        if not self.states:
            raise ValidationError("state space must be non-empty")
        if len(set(self.states)) != len(self.states):
            raise ValidationError("state ids must be unique")

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise ValidationError(f"unknown state id: {state!r}") from None


@dataclass(frozen=True)
class BeliefState:
    """Distribution over a StateSpace plus the number of updates applied."""

    space: StateSpace
    probs: tuple[float, ...]
    step: int = 0

    def __post_init__(self):
        if len(self.probs) != len(self.space.states):
            raise ValidationError(
                f"belief has {len(self.probs)} entries for "
                f"{len(self.space.states)} states"
            )
        if any(p < 0 for p in self.probs):
            raise ValidationError("belief entries must be non-negative")
        total = sum(self.probs)
        if abs(total - 1.0) > BELIEF_TOLERANCE:
            raise ValidationError(f"belief sums to {total!r}, not 1")

    def prob(self, state: str) -> float:
        return self.probs[self.space.index(state)]


def uniform_belief(space: StateSpace) -> BeliefState:
    n = len(space.states)
    return BeliefState(space=space, probs=tuple(1.0 / n for _ in range(n)))


@dataclass(frozen=True)
class DirectorAction:
    kind: ActionKind
    model_id: str | None = None

    def __post_init__(self):
        if self.kind is ActionKind.RESELECT and not self.model_id:
            raise ValidationError("RESELECT requires a model_id")


@dataclass(frozen=True)
class Observation:
    kind: str
    payload_ref: str | None = None


@dataclass(frozen=True)
class Suggestion:
    kind: str = SUGG_NONE
    source: str = "none"


NEUTRAL_SUGGESTION = Suggestion()


def _check_row(row: Mapping[str, float], what: str) -> None:
    for key, p in row.items():
        if p < 0:
            raise ValidationError(f"{what}: negative probability for {key!r}")
    total = sum(row.values())
    if abs(total - 1.0) > TABLE_TOLERANCE:
        raise ValidationError(f"{what}: row sums to {total!r}, not 1")


@dataclass(frozen=True)
class ObservationModel:
    """p(observation | state, action) and p(suggestion | state) tables.

    obs_like is keyed state -> action kind -> observation; sugg_like is keyed
    state -> suggestion. Rows are validated as distributions unless validate
    is disabled (the escape hatch exists so scale-invariance can be probed).
    """

    observations: tuple[str, ...] = DEFAULT_OBSERVATIONS
    suggestions: tuple[str, ...] = DEFAULT_SUGGESTIONS
    obs_like: Mapping[str, Mapping[str, Mapping[str, float]]] = field(
        default_factory=dict
    )
    sugg_like: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    validate: bool = True

    def __post_init__(self):
        if not self.validate:
            return
        for state, per_action in self.obs_like.items():
            for action, row in per_action.items():
                _check_row(row, f"obs_like[{state}][{action}]")
        for state, row in self.sugg_like.items():
            _check_row(row, f"sugg_like[{state}]")

    def p_obs(self, obs: str, state: str, action: ActionKind) -> float:
        try:
            return self.obs_like[state][action.value][obs]
        except KeyError:
            raise ValidationError(
                f"obs_like has no entry for state={state!r} "
                f"action={action.value!r} obs={obs!r}"
            ) from None

    def p_sugg(self, sugg: str, state: str) -> float:
        try:
            return self.sugg_like[state][sugg]
        except KeyError:
            raise ValidationError(
                f"sugg_like has no entry for state={state!r} sugg={sugg!r}"
            ) from None


@dataclass(frozen=True)
class TransitionModel:
    """p(next state | state, action), keyed state -> action kind -> next."""

    trans: Mapping[str, Mapping[str, Mapping[str, float]]] = field(
        default_factory=dict
    )
    validate: bool = True

    def __post_init__(self):
        if not self.validate:
            return
        for state, per_action in self.trans.items():
            for action, row in per_action.items():
                _check_row(row, f"trans[{state}][{action}]")

    def p_next(self, next_state: str, state: str, action: ActionKind) -> float:
        try:
            return self.trans[state][action.value][next_state]
        except KeyError:
            raise ValidationError(
                f"trans has no entry for state={state!r} "
                f"action={action.value!r} next={next_state!r}"
            ) from None


@dataclass(frozen=True)
class DirectorPolicy:
    accept_threshold: float = 0.70
    abort_floor: float = 0.05
    reselect_threshold: float = 0.50

    def __post_init__(self):
        if not 0.0 < self.abort_floor < self.accept_threshold <= 1.0:
            raise ValidationError(
                "policy requires 0 < abort_floor < accept_threshold <= 1"
            )
        if not 0.0 <= self.reselect_threshold <= 1.0:
            raise ValidationError("reselect_threshold must lie in [0, 1]")


def belief_update(
    belief: BeliefState,
    action: DirectorAction,
    observation: Observation,
    suggestion: Suggestion,
    obs_model: ObservationModel,
    trans_model: TransitionModel,
) -> BeliefState:
    """One recursive filter step: predict under the action, weigh by both
    evidence likelihoods, renormalize.

    Raises DegenerateUpdateError when every state gets zero mass; a silent
    reset would hide a modeling bug.
    """
    states = belief.space.states
    unnormalized = []
    for s in states:
        predicted = sum(
            trans_model.p_next(s, prev, action.kind) * belief.probs[i]
            for i, prev in enumerate(states)
        )
        weight = (
            obs_model.p_sugg(suggestion.kind, s)
            * obs_model.p_obs(observation.kind, s, action.kind)
        )
        unnormalized.append(weight * predicted)
    total = sum(unnormalized)
    if total <= 0.0:
        raise DegenerateUpdateError(
            f"zero normalizer at step {belief.step + 1} for "
            f"obs={observation.kind!r} action={action.kind.value!r}"
        )
    return BeliefState(
        space=belief.space,
        probs=tuple(u / total for u in unnormalized),
        step=belief.step + 1,
    )


def brute_force_posterior(
    prior: BeliefState,
    history: Sequence[tuple[DirectorAction, Observation, Suggestion]],
    obs_model: ObservationModel,
    trans_model: TransitionModel,
) -> BeliefState:
    """Posterior over the final state by full trajectory enumeration.

    Sums the joint weight of every state sequence (s_0 .. s_T), where each
    step contributes transition * observation * suggestion factors, then
    marginalizes onto s_T. Exponential in T; it exists as an oracle, not as
    a production path.
    """
    if not history:
        raise ValidationError("history must contain at least one step")
    states = prior.space.states
    marginal = {s: 0.0 for s in states}
    for trajectory in itertools.product(states, repeat=len(history) + 1):
        weight = prior.probs[prior.space.index(trajectory[0])]
        if weight == 0.0:
            continue
        for t, (action, obs, sugg) in enumerate(history):
            s_here = trajectory[t + 1]
            weight *= (
                trans_model.p_next(s_here, trajectory[t], action.kind)
                * obs_model.p_obs(obs.kind, s_here, action.kind)
                * obs_model.p_sugg(sugg.kind, s_here)
            )
            if weight == 0.0:
                break
        marginal[trajectory[-1]] += weight
    total = sum(marginal.values())
    if total <= 0.0:
        raise DegenerateUpdateError("zero joint mass over all trajectories")
    return BeliefState(
        space=prior.space,
        probs=tuple(marginal[s] / total for s in states),
        step=prior.step + len(history),
    )


def select_action(
    belief: BeliefState,
    policy: DirectorPolicy,
    ranked_models: Sequence[str],
    attempts_left: int,
    current_model: str | None = None,
    *,
    used_models: Iterable[str] | None = None,
    accept_eligible: bool = True,
) -> DirectorAction:
    """Deterministic threshold cascade over the belief.

    Order matters and is fixed: no budget -> ABORT; confident enough (and
    externally eligible) -> ACCEPT; mismatch suspected and an unused ranked
    model remains -> RESELECT it; hope below the floor -> ABORT; otherwise
    REFINE. used_models defaults to just the current model; a reselect never
    revisits a used model, it degrades to the later cascade branches instead.
    """
    if attempts_left < 0:
        raise ValidationError("attempts_left must be >= 0")
    if attempts_left == 0:
        return DirectorAction(kind=ActionKind.ABORT)
    if accept_eligible and belief.prob(ON_TRACK) >= policy.accept_threshold:
        return DirectorAction(kind=ActionKind.ACCEPT)
    used = set(used_models) if used_models is not None else set()
    if current_model is not None:
        used.add(current_model)
    if belief.prob(MODEL_MISMATCH) >= policy.reselect_threshold:
        for model_id in ranked_models:
            if model_id not in used:
                return DirectorAction(kind=ActionKind.RESELECT, model_id=model_id)
    if belief.prob(ON_TRACK) < policy.abort_floor:
        return DirectorAction(kind=ActionKind.ABORT)
    return DirectorAction(kind=ActionKind.REFINE)


# =========================================================================
# Config document <-> model objects
# =========================================================================


@dataclass(frozen=True)
class FilterConfig:
    """Everything the director needs, bundled for loading from one document."""

    space: StateSpace
    obs_model: ObservationModel
    trans_model: TransitionModel
    policy: DirectorPolicy


def filter_from_doc(doc: Mapping) -> FilterConfig:
    """Build a FilterConfig from a parsed JSON document.

    Expected shape:
        {"states": [...], "observations": [...], "suggestions": [...],
         "obs_like": {state: {action: {obs: p}}},
         "sugg_like": {state: {sugg: p}},
         "trans": {state: {action: {next: p}}},
         "policy": {"accept_threshold": .., "abort_floor": ..,
                    "reselect_threshold": ..}}
    """
    try:
        states = tuple(doc["states"])
        observations = tuple(doc.get("observations", DEFAULT_OBSERVATIONS))
        suggestions = tuple(doc.get("suggestions", DEFAULT_SUGGESTIONS))
        obs_like = doc["obs_like"]
        sugg_like = doc["sugg_like"]
        trans = doc["trans"]
    except KeyError as exc:
        raise ConfigError(f"filter config missing field {exc}") from None
    policy_doc = doc.get("policy", {})
    space = StateSpace(states=states)
    obs_model = ObservationModel(
        observations=observations,
        suggestions=suggestions,
        obs_like=obs_like,
        sugg_like=sugg_like,
    )
    trans_model = TransitionModel(trans=trans)
    policy = DirectorPolicy(
        accept_threshold=policy_doc.get("accept_threshold", 0.70),
        abort_floor=policy_doc.get("abort_floor", 0.05),
        reselect_threshold=policy_doc.get("reselect_threshold", 0.50),
    )
    for state in space.states:
        if state not in obs_model.obs_like or state not in trans_model.trans:
            raise ConfigError(f"filter tables missing rows for state {state!r}")
    return FilterConfig(
        space=space, obs_model=obs_model, trans_model=trans_model, policy=policy
    )


def default_filter_doc() -> dict:
    """Built-in tables for the default four-state space.

    Likelihood rows encode the intended evidence ratios: ON_TRACK is
    compile-clean and agent-clean, MODEL_MISMATCH is dominated by compile
    errors, SEMANTIC_DRIFT compiles but fails tests and agents. Suggestion
    rows are uniform, which makes the default NONE suggestion a no-op.
    Transition rows reward REFINE from MINOR_DEFECTS and RESELECT from
    MODEL_MISMATCH.
    """
    obs_rows = {
        ON_TRACK: {
            OBS_COMPILE_OK: 0.35, OBS_COMPILE_ERR: 0.05,
            OBS_TESTS_PASS: 0.20, OBS_TESTS_FAIL: 0.05,
            OBS_AGENTS_PASS: 0.30, OBS_AGENTS_FAIL: 0.05,
        },
        MINOR_DEFECTS: {
            OBS_COMPILE_OK: 0.15, OBS_COMPILE_ERR: 0.30,
            OBS_TESTS_PASS: 0.08, OBS_TESTS_FAIL: 0.15,
            OBS_AGENTS_PASS: 0.07, OBS_AGENTS_FAIL: 0.25,
        },
        MODEL_MISMATCH: {
            OBS_COMPILE_OK: 0.05, OBS_COMPILE_ERR: 0.35,
            OBS_TESTS_PASS: 0.02, OBS_TESTS_FAIL: 0.18,
            OBS_AGENTS_PASS: 0.05, OBS_AGENTS_FAIL: 0.35,
        },
        SEMANTIC_DRIFT: {
            OBS_COMPILE_OK: 0.20, OBS_COMPILE_ERR: 0.10,
            OBS_TESTS_PASS: 0.05, OBS_TESTS_FAIL: 0.25,
            OBS_AGENTS_PASS: 0.10, OBS_AGENTS_FAIL: 0.30,
        },
    }
    trans_rows = {
        ON_TRACK: {
            ActionKind.SELECT_MODEL.value: {
                ON_TRACK: 0.70, MINOR_DEFECTS: 0.10,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.10,
            },
            ActionKind.REFINE.value: {
                ON_TRACK: 0.85, MINOR_DEFECTS: 0.10,
                MODEL_MISMATCH: 0.03, SEMANTIC_DRIFT: 0.02,
            },
            ActionKind.RESELECT.value: {
                ON_TRACK: 0.60, MINOR_DEFECTS: 0.20,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.10,
            },
        },
        MINOR_DEFECTS: {
            ActionKind.SELECT_MODEL.value: {
                ON_TRACK: 0.10, MINOR_DEFECTS: 0.70,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.10,
            },
            ActionKind.REFINE.value: {
                ON_TRACK: 0.45, MINOR_DEFECTS: 0.40,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.05,
            },
            ActionKind.RESELECT.value: {
                ON_TRACK: 0.40, MINOR_DEFECTS: 0.30,
                MODEL_MISMATCH: 0.15, SEMANTIC_DRIFT: 0.15,
            },
        },
        MODEL_MISMATCH: {
            ActionKind.SELECT_MODEL.value: {
                ON_TRACK: 0.10, MINOR_DEFECTS: 0.10,
                MODEL_MISMATCH: 0.70, SEMANTIC_DRIFT: 0.10,
            },
            ActionKind.REFINE.value: {
                ON_TRACK: 0.10, MINOR_DEFECTS: 0.15,
                MODEL_MISMATCH: 0.65, SEMANTIC_DRIFT: 0.10,
            },
            ActionKind.RESELECT.value: {
                ON_TRACK: 0.50, MINOR_DEFECTS: 0.25,
                MODEL_MISMATCH: 0.15, SEMANTIC_DRIFT: 0.10,
            },
        },
        SEMANTIC_DRIFT: {
            ActionKind.SELECT_MODEL.value: {
                ON_TRACK: 0.10, MINOR_DEFECTS: 0.10,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.70,
            },
            ActionKind.REFINE.value: {
                ON_TRACK: 0.20, MINOR_DEFECTS: 0.20,
                MODEL_MISMATCH: 0.10, SEMANTIC_DRIFT: 0.50,
            },
            ActionKind.RESELECT.value: {
                ON_TRACK: 0.30, MINOR_DEFECTS: 0.25,
                MODEL_MISMATCH: 0.15, SEMANTIC_DRIFT: 0.30,
            },
        },
    }
    # Terminal actions never precede an observation; identity rows keep the
    # tables total over the full action alphabet anyway.
    for state, per_action in trans_rows.items():
        for terminal in (ActionKind.ACCEPT, ActionKind.ABORT):
            per_action[terminal.value] = {
                s: (1.0 if s == state else 0.0) for s in DEFAULT_STATES
            }
    obs_like = {
        state: {kind.value: dict(row) for kind in ActionKind}
        for state, row in obs_rows.items()
    }
    sugg_like = {
        state: {sugg: 0.25 for sugg in DEFAULT_SUGGESTIONS}
        for state in DEFAULT_STATES
    }
    return {
        "states": list(DEFAULT_STATES),
        "observations": list(DEFAULT_OBSERVATIONS),
        "suggestions": list(DEFAULT_SUGGESTIONS),
        "obs_like": obs_like,
        "sugg_like": sugg_like,
        "trans": trans_rows,
        "policy": {
            "accept_threshold": 0.70,
            "abort_floor": 0.05,
            "reselect_threshold": 0.50,
        },
    }


def default_filter_config() -> FilterConfig:
    return filter_from_doc(default_filter_doc())
