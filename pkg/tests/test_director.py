import random

import pytest

from transforge.director import (
    ON_TRACK,
    MODEL_MISMATCH,
    OBS_AGENTS_PASS,
    OBS_COMPILE_ERR,
    ActionKind,
    BeliefState,
    DirectorAction,
    DirectorPolicy,
    NEUTRAL_SUGGESTION,
    Observation,
    ObservationModel,
    StateSpace,
    Suggestion,
    TransitionModel,
    belief_update,
    brute_force_posterior,
    default_filter_config,
    select_action,
    uniform_belief,
)
from transforge.errors import DegenerateUpdateError, ValidationError


def _two_state_models(p_ok_good=0.9, p_ok_bad=0.2):
    om = ObservationModel(
        observations=("OK", "ERR"),
        suggestions=("NONE",),
        obs_like={
            "good": {"REFINE": {"OK": p_ok_good, "ERR": 1 - p_ok_good}},
            "bad": {"REFINE": {"OK": p_ok_bad, "ERR": 1 - p_ok_bad}},
        },
        sugg_like={"good": {"NONE": 1.0}, "bad": {"NONE": 1.0}},
    )
    tm = TransitionModel(
        trans={
            "good": {"REFINE": {"good": 1.0, "bad": 0.0}},
            "bad": {"REFINE": {"good": 0.0, "bad": 1.0}},
        }
    )
    return om, tm


def test_two_state_posterior_matches_hand_computation():
    # prior (.5, .5), identity transition, p(OK|good)=.9, p(OK|bad)=.2:
    # posterior = (.45, .10) / .55 = (9/11, 2/11)
    om, tm = _two_state_models()
    space = StateSpace(states=("good", "bad"))
    prior = BeliefState(space=space, probs=(0.5, 0.5))
    post = belief_update(
        prior,
        DirectorAction(kind=ActionKind.REFINE),
        Observation(kind="OK"),
        Suggestion(kind="NONE"),
        om,
        tm,
    )
    assert post.probs[0] == pytest.approx(9 / 11, abs=1e-12)
    assert post.probs[1] == pytest.approx(2 / 11, abs=1e-12)
    assert post.step == prior.step + 1


def test_update_increments_step_and_stays_on_simplex():
    cfg = default_filter_config()
    b = uniform_belief(cfg.space)
    post = belief_update(
        b,
        DirectorAction(kind=ActionKind.SELECT_MODEL),
        Observation(kind=OBS_COMPILE_ERR),
        NEUTRAL_SUGGESTION,
        cfg.obs_model,
        cfg.trans_model,
    )
    assert post.step == 1
    assert sum(post.probs) == pytest.approx(1.0, abs=1e-12)
    assert all(p >= 0 for p in post.probs)


def test_degenerate_update_raises_not_resets():
    om = ObservationModel(
        observations=("OK", "ERR"),
        suggestions=("NONE",),
        obs_like={
            "good": {"REFINE": {"OK": 1.0, "ERR": 0.0}},
            "bad": {"REFINE": {"OK": 1.0, "ERR": 0.0}},
        },
        sugg_like={"good": {"NONE": 1.0}, "bad": {"NONE": 1.0}},
    )
    _, tm = _two_state_models()
    space = StateSpace(states=("good", "bad"))
    prior = BeliefState(space=space, probs=(0.5, 0.5))
    with pytest.raises(DegenerateUpdateError):
        belief_update(
            prior,
            DirectorAction(kind=ActionKind.REFINE),
            Observation(kind="ERR"),
            Suggestion(kind="NONE"),
            om,
            tm,
        )


def test_brute_force_single_step_equals_recursive():
    om, tm = _two_state_models()
    space = StateSpace(states=("good", "bad"))
    prior = BeliefState(space=space, probs=(0.5, 0.5))
    step = (
        DirectorAction(kind=ActionKind.REFINE),
        Observation(kind="OK"),
        Suggestion(kind="NONE"),
    )
    recursive = belief_update(prior, *step, om, tm)
    brute = brute_force_posterior(prior, [step], om, tm)
    assert brute.probs == pytest.approx(recursive.probs, abs=1e-15)
    assert brute.step == recursive.step


def test_brute_force_rejects_empty_history():
    om, tm = _two_state_models()
    space = StateSpace(states=("good", "bad"))
    prior = BeliefState(space=space, probs=(0.5, 0.5))
    with pytest.raises(ValidationError):
        brute_force_posterior(prior, [], om, tm)


def _random_tables(rng, states, n_obs, n_sugg, actions):
    obs_alpha = tuple(f"O{i}" for i in range(n_obs))
    sugg_alpha = tuple(f"G{i}" for i in range(n_sugg))

    def simplex(n):
        raw = [rng.uniform(0.05, 1.0) for _ in range(n)]
        total = sum(raw)
        return [x / total for x in raw]

    obs_like = {
        s: {
            a.value: dict(zip(obs_alpha, simplex(n_obs)))
            for a in actions
        }
        for s in states
    }
    sugg_like = {s: dict(zip(sugg_alpha, simplex(n_sugg))) for s in states}
    trans = {
        s: {a.value: dict(zip(states, simplex(len(states)))) for a in actions}
        for s in states
    }
    om = ObservationModel(
        observations=obs_alpha,
        suggestions=sugg_alpha,
        obs_like=obs_like,
        sugg_like=sugg_like,
    )
    tm = TransitionModel(trans=trans)
    return om, tm, obs_alpha, sugg_alpha


def test_random_histories_match_brute_force():
    rng = random.Random(20240817)
    actions = (ActionKind.SELECT_MODEL, ActionKind.REFINE, ActionKind.RESELECT)
    for _ in range(60):
        n_states = rng.choice((2, 3, 4))
        states = tuple(f"S{i}" for i in range(n_states))
        space = StateSpace(states=states)
        om, tm, obs_alpha, sugg_alpha = _random_tables(
            rng, states, rng.choice((2, 3, 4)), rng.choice((2, 3)), actions
        )
        raw = [rng.uniform(0.05, 1.0) for _ in range(n_states)]
        total = sum(raw)
        prior = BeliefState(space=space, probs=tuple(x / total for x in raw))
        history = []
        for _ in range(rng.randint(1, 5)):
            kind = rng.choice(actions)
            model = "m" if kind is ActionKind.RESELECT else None
            history.append(
                (
                    DirectorAction(kind=kind, model_id=model),
                    Observation(kind=rng.choice(obs_alpha)),
                    Suggestion(kind=rng.choice(sugg_alpha)),
                )
            )
        belief = prior
        for step in history:
            belief = belief_update(belief, *step, om, tm)
        brute = brute_force_posterior(prior, history, om, tm)
        for got, want in zip(belief.probs, brute.probs):
            assert got == pytest.approx(want, abs=1e-9)


def test_likelihood_scaling_leaves_posterior_unchanged():
    om, tm = _two_state_models()
    space = StateSpace(states=("good", "bad"))
    prior = BeliefState(space=space, probs=(0.3, 0.7))
    step = (
        DirectorAction(kind=ActionKind.REFINE),
        Observation(kind="OK"),
        Suggestion(kind="NONE"),
    )
    base = belief_update(prior, *step, om, tm)
    for c in (0.001, 0.37, 250.0):
        scaled = ObservationModel(
            observations=om.observations,
            suggestions=om.suggestions,
            obs_like={
                s: {
                    a: {o: (p * c if o == "OK" else p) for o, p in row.items()}
                    for a, row in per.items()
                }
                for s, per in om.obs_like.items()
            },
            sugg_like=om.sugg_like,
            validate=False,
        )
        post = belief_update(prior, *step, scaled, tm)
        for got, want in zip(post.probs, base.probs):
            assert got == pytest.approx(want, abs=1e-12)


def test_belief_validation():
    space = StateSpace(states=("a", "b"))
    with pytest.raises(ValidationError):
        BeliefState(space=space, probs=(0.6, 0.6))
    with pytest.raises(ValidationError):
        BeliefState(space=space, probs=(-0.1, 1.1))
    with pytest.raises(ValidationError):
        BeliefState(space=space, probs=(1.0,))


def test_table_validation_rejects_unnormalized_rows():
    with pytest.raises(ValidationError):
        ObservationModel(
            observations=("OK",),
            suggestions=("NONE",),
            obs_like={"s": {"REFINE": {"OK": 0.5}}},
            sugg_like={"s": {"NONE": 1.0}},
        )
    with pytest.raises(ValidationError):
        TransitionModel(trans={"s": {"REFINE": {"s": 0.9}}})


def test_policy_invariants():
    with pytest.raises(ValidationError):
        DirectorPolicy(accept_threshold=0.5, abort_floor=0.6)
    with pytest.raises(ValidationError):
        DirectorPolicy(reselect_threshold=1.2)
    DirectorPolicy()  # defaults are valid


def _belief(on_track, minor, mismatch, drift):
    return BeliefState(
        space=StateSpace(),
        probs=(on_track, minor, mismatch, drift),
    )


def test_cascade_accept():
    b = _belief(0.75, 0.10, 0.10, 0.05)
    act = select_action(b, DirectorPolicy(), ["a", "b"], attempts_left=3)
    assert act.kind is ActionKind.ACCEPT


def test_cascade_budget_exhausted_wins_over_accept():
    b = _belief(0.95, 0.02, 0.02, 0.01)
    act = select_action(b, DirectorPolicy(), ["a"], attempts_left=0)
    assert act.kind is ActionKind.ABORT


def test_cascade_reselect_picks_next_unused():
    b = _belief(0.20, 0.15, 0.60, 0.05)
    act = select_action(
        b,
        DirectorPolicy(),
        ["granite-code", "starcoder2"],
        attempts_left=3,
        current_model="granite-code",
    )
    assert act.kind is ActionKind.RESELECT
    assert act.model_id == "starcoder2"


def test_cascade_reselect_never_revisits_used_models():
    b = _belief(0.20, 0.15, 0.60, 0.05)
    act = select_action(
        b,
        DirectorPolicy(),
        ["a", "b"],
        attempts_left=3,
        current_model="b",
        used_models={"a", "b"},
    )
    assert act.kind is ActionKind.REFINE


def test_cascade_reselect_outranks_abort_floor():
    # mismatch dominates and a fresh model exists: switching beats giving up
    b = _belief(0.03, 0.15, 0.72, 0.10)
    act = select_action(
        b, DirectorPolicy(), ["a", "b"], attempts_left=2, current_model="a"
    )
    assert act.kind is ActionKind.RESELECT


def test_cascade_abort_floor():
    b = _belief(0.02, 0.50, 0.38, 0.10)
    act = select_action(
        b, DirectorPolicy(), ["a"], attempts_left=2, current_model="a"
    )
    assert act.kind is ActionKind.ABORT


def test_cascade_refine_default():
    b = _belief(0.30, 0.40, 0.20, 0.10)
    act = select_action(
        b, DirectorPolicy(), ["a"], attempts_left=2, current_model="a"
    )
    assert act.kind is ActionKind.REFINE


def test_cascade_accept_gated_by_eligibility():
    b = _belief(0.80, 0.10, 0.05, 0.05)
    act = select_action(
        b,
        DirectorPolicy(),
        ["a"],
        attempts_left=2,
        current_model="a",
        accept_eligible=False,
    )
    assert act.kind is ActionKind.REFINE


def test_default_tables_demo_trace():
    """Frozen trace: two compile errors then a clean pass on a fresh model."""
    cfg = default_filter_config()
    pol = cfg.policy
    b = uniform_belief(cfg.space)

    b1 = belief_update(
        b,
        DirectorAction(kind=ActionKind.SELECT_MODEL, model_id="alpha"),
        Observation(kind=OBS_COMPILE_ERR),
        NEUTRAL_SUGGESTION,
        cfg.obs_model,
        cfg.trans_model,
    )
    assert b1.probs == pytest.approx((0.0625, 0.375, 0.4375, 0.125), abs=1e-12)
    a1 = select_action(
        b1, pol, ["alpha", "beta"], attempts_left=4, current_model="alpha"
    )
    assert a1.kind is ActionKind.REFINE

    b2 = belief_update(
        b1,
        a1,
        Observation(kind=OBS_COMPILE_ERR),
        NEUTRAL_SUGGESTION,
        cfg.obs_model,
        cfg.trans_model,
    )
    assert b2.prob(MODEL_MISMATCH) == pytest.approx(0.537616, abs=1e-6)
    a2 = select_action(
        b2, pol, ["alpha", "beta"], attempts_left=3, current_model="alpha"
    )
    assert a2.kind is ActionKind.RESELECT
    assert a2.model_id == "beta"

    b3 = belief_update(
        b2,
        a2,
        Observation(kind=OBS_AGENTS_PASS),
        NEUTRAL_SUGGESTION,
        cfg.obs_model,
        cfg.trans_model,
    )
    assert b3.prob(ON_TRACK) == pytest.approx(0.781761, abs=1e-6)
    a3 = select_action(
        b3,
        pol,
        ["alpha", "beta"],
        attempts_left=2,
        current_model="beta",
        used_models={"alpha", "beta"},
    )
    assert a3.kind is ActionKind.ACCEPT
