import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affordsim.forward_models import PAPER_CORRECTOR, PAPER_FM, TactileFM, predict_array
from affordsim.inverse_model import BLOB_H, BLOB_W, PAIRS, IMVariant, InverseModel, RegressionModule, render_blob_array
from affordsim.sensor import SensoryState, correct_initial_state, project_scene
from affordsim.simulation import (ALL_CONDITIONS, AntiOscillation, CorridorCriterion, CriterionTracker, Models,
                                  Outcome, Restart, TaskCondition, TrialResult, _Trial, apply_anti_oscillation,
                                  check_corridor_criterion, make_restart_prefix, run_simulation, run_trial,
                                  trace_from_text, trace_to_text)
from affordsim.world import MotorCommand, ObstacleDisk, Pose, WorldScene, generate_scene

F, L, R = MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT
N = BLOB_H * BLOB_W
CRIT = CorridorCriterion()


def flat_im(variant=IMVariant.DET):
    """q = 0.5 everywhere: DET always answers Forward."""
    return InverseModel(tuple(RegressionModule(p, np.zeros(N), np.zeros(N)) for p in PAIRS), variant)


def models(im=None, corrector=None):
    return Models(PAPER_FM, TactileFM(215.0), im or flat_im(), corrector)


def cond(v="det", a="none", r="full"):
    return TaskCondition.parse(f"{v}/{a}/{r}")


# --- criterion ----------------------------------------------------------------

def test_criterion_examples():
    assert check_corridor_criterion([F] * 60, False) is None
    assert check_corridor_criterion([L, R] * 10 + [L] + [F] * 5, False) is Outcome.TURN_LIMIT
    assert check_corridor_criterion([L] * 15 + [R] * 4, False) is Outcome.IMBALANCE
    assert check_corridor_criterion([F], True) is Outcome.COLLISION
    with pytest.raises(ValueError):
        CorridorCriterion(max_turns=0)


@given(st.lists(st.sampled_from([F, L, R]), max_size=80))
def test_tracker_add_remove(seq):
    t = CriterionTracker(CRIT)
    for c in seq:
        t.add(c)
    for c in reversed(seq):
        t.remove(c)
    assert (t.n_left, t.n_right) == (0, 0)


def test_condition_labels():
    assert len(ALL_CONDITIONS) == 24 and len(set(ALL_CONDITIONS)) == 24
    for c in ALL_CONDITIONS:
        assert TaskCondition.parse(c.label) == c
    assert TaskCondition.parse("DET/FORWARD_CONTINUE/PARTIAL").anti_osc is AntiOscillation.FORWARD_CONTINUE
    with pytest.raises(ValueError):
        TaskCondition.parse("det/none")


# --- anti-oscillation ----------------------------------------------------------

def trial_with(seq, data=np.zeros((0, 4))):
    t = _Trial(data, models(), CRIT, record=True)
    for c in seq:
        t.append(c, t.predict(t.data, c))
    return t


def test_forward_replaces_oscillation():
    t = trial_with([F, F, L])
    assert apply_anti_oscillation(AntiOscillation.FORWARD, t, R) is None
    assert t.seq == [F, F, F]


def test_continue_repeats_first_turn():
    t = trial_with([F, L])
    apply_anti_oscillation(AntiOscillation.CONTINUE, t, R)
    assert t.seq == [F, L, L]


def test_none_keeps_oscillation():
    t = trial_with([F, L])
    apply_anti_oscillation(AntiOscillation.NONE, t, R)
    assert t.seq == [F, L, R]


def test_forward_modes_when_front_blocked():
    ahead = np.array([[210.0, 0.0, 175.0, 10.0]])
    t = trial_with([L], ahead)
    assert apply_anti_oscillation(AntiOscillation.FORWARD, t, R) is None
    assert t.seq == []
    np.testing.assert_allclose(t.data, ahead)
    assert t.fm_inv == 3      # the turn, the cancelling turn, the forward probe
    t = trial_with([L], ahead)
    apply_anti_oscillation(AntiOscillation.FORWARD_CONTINUE, t, R)
    assert t.seq == [L, L]
    np.testing.assert_allclose(t.data[0, 1], ahead[0, 1] + 120)


def test_non_oscillating_turns_untouched():
    for mode in AntiOscillation:
        t = trial_with([F, L])
        apply_anti_oscillation(mode, t, L)
        assert t.seq == [F, L, L]


# --- trials --------------------------------------------------------------------

def test_empty_scene_det_goes_straight():
    res = run_trial(np.zeros((0, 4)), models(), cond(), CRIT)
    assert res.outcome is Outcome.CORRIDOR_FOUND
    assert res.sequence == [F] * 60
    assert res.im_invocations == 60 and res.fm_invocations == 60


def oscillating_im():
    """F always bad; L preferred at the start blob, R after one left turn."""
    start = np.array([[210.0, -30.0, 175.0, 10.0]])
    a = render_blob_array(start).reshape(-1).astype(float)
    b = render_blob_array(predict_array(PAPER_FM, start, L)).reshape(-1).astype(float)
    zero = np.zeros(N)
    mods = (RegressionModule((F, L), zero, -(a + b)), RegressionModule((F, R), zero, -(a + b)),
            RegressionModule((L, R), (a + b) / 2, a - b))
    return InverseModel(mods), start


def test_det_oscillation_hits_invocation_cap_under_forward():
    im, start = oscillating_im()
    res = run_trial(start, models(im), cond("det", "forward"), CRIT)
    assert res.outcome is Outcome.INVOCATION_CAP
    assert res.im_invocations == 300 and res.sequence == []


def test_det_oscillation_under_none_hits_turn_limit():
    im, start = oscillating_im()
    res = run_trial(start, models(im), cond("det", "none"), CRIT)
    assert res.outcome is Outcome.TURN_LIMIT
    assert res.sequence == [L, R] * 10 + [L]


def test_trial_deterministic(trained):
    m = trained.models(IMVariant.PROB)
    data = np.array([[60.0, -300.0, 102.0, 15.0], [70.0, 250.0, 105.0, 18.0]])
    a = run_trial(data, m, cond("prob", "forward-continue"), CRIT, np.random.default_rng(8))
    b = run_trial(data, m, cond("prob", "forward-continue"), CRIT, np.random.default_rng(8))
    assert a.sequence == b.sequence and a.outcome == b.outcome and a.fm_invocations == b.fm_invocations


def test_prefix_replay_counts_fm_only():
    res = run_trial(np.zeros((0, 4)), models(), cond(r="partial"), CRIT, resume_prefix=[F, F, L, L, L])
    assert res.prefix_length == 5
    assert res.sequence[:5] == [F, F, L, L, L]
    assert res.im_invocations == 55 and res.fm_invocations == 60


# --- restarts ------------------------------------------------------------------

def test_full_restart_has_no_prefix():
    prev = TrialResult([F] * 30, Outcome.COLLISION, 30, 30)
    assert make_restart_prefix(Restart.FULL, prev, np.random.default_rng(0)) is None


@given(st.integers(0, 2 ** 32 - 1))
def test_partial_prefix_shape(seed):
    rng = np.random.default_rng(seed)
    seq = [F, L, F, R] * 15
    p = make_restart_prefix(Restart.PARTIAL, TrialResult(seq, Outcome.COLLISION, 0, 0), rng)
    k = len(p) - 3
    assert 0 <= k < 40 and p[:k] == seq[:k]
    assert p[-3:] in ([L] * 3, [R] * 3)


def test_partial_prefix_of_empty_sequence():
    p = make_restart_prefix(Restart.PARTIAL, TrialResult([], Outcome.COLLISION, 0, 0), np.random.default_rng(1))
    assert p in ([L] * 3, [R] * 3)


def test_partial_directions_balanced():
    rng = np.random.default_rng(2)
    prev = TrialResult([F] * 60, Outcome.COLLISION, 0, 0)
    ends = [make_restart_prefix(Restart.PARTIAL, prev, rng)[-1] for _ in range(4000)]
    assert abs(sum(e is L for e in ends) / 4000 - 0.5) < 0.03


# --- runs ------------------------------------------------------------------------

def sealed_ring(n=16, radius=1.1):
    c = (2.0, 2.0)
    obs = tuple(ObstacleDisk(i, (c[0] + radius * math.cos(2 * math.pi * i / n),
                                 c[1] + radius * math.sin(2 * math.pi * i / n))) for i in range(n))
    return WorldScene(obs, Pose(*c, 0.3), "DeadEnd", (4.0, 4.0))


def test_sealed_ring_is_dead_end_in_every_condition(trained):
    scene = sealed_ring()
    obs = project_scene(scene, scene.robot_start)
    for c in ALL_CONDITIONS:
        run = run_simulation(obs, trained.models(c.im_variant), c, CRIT, np.random.default_rng(0))
        assert run.classification == "DeadEnd", c.label
        assert run.n_trials == CRIT.max_trials


def test_det_full_trials_identical(trained):
    scene = sealed_ring()
    run = run_simulation(project_scene(scene, scene.robot_start), trained.models(IMVariant.DET),
                         cond("det", "forward-continue", "full"), CRIT)
    assert all(t.sequence == run.trials[0].sequence for t in run.trials)
    assert run.fm_invocations == sum(t.fm_invocations for t in run.trials)


def test_open_space_run_succeeds_on_first_trial():
    run = run_simulation(SensoryState([], np.zeros((0, 4))), models(), cond())
    assert run.classification == "Corridor" and run.n_trials == 1


def replay_check(seq, initial, m: Models, crit=CRIT):
    """Independent recount: turns, imbalance and predicted collisions along the sequence."""
    data = initial
    for k in range(1, len(seq) + 1):
        data = predict_array(m.fm, data, seq[k - 1], m.corrector)
        turns = sum(c is not F for c in seq[:k])
        imb = abs(seq[:k].count(L) - seq[:k].count(R))
        if len(data) and data[:, 0].max() > m.tactile.collision_width_threshold:
            return "collision"
        if turns > crit.max_turns or imb > crit.max_turn_imbalance:
            return "turns"
    return "ok" if len(seq) == crit.max_steps else "short"


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6), st.sampled_from(ALL_CONDITIONS))
def test_run_invariants(trained, seed, c):
    rng = np.random.default_rng(seed)
    scene = generate_scene("Corridor" if seed % 2 else "DeadEnd", seed)
    m = trained.models(c.im_variant)
    obs = project_scene(scene, scene.robot_start)
    run = run_simulation(obs, m, c, CRIT, rng)
    init = correct_initial_state(obs, m.correction).data
    assert 1 <= run.n_trials <= CRIT.max_trials
    assert run.fm_invocations == sum(t.fm_invocations for t in run.trials)
    assert run.im_invocations == sum(t.im_invocations for t in run.trials)
    for t in run.trials:
        if t.outcome is Outcome.CORRIDOR_FOUND:
            assert replay_check(t.sequence, init, m) == "ok"
        if c.anti_osc in (AntiOscillation.FORWARD, AntiOscillation.FORWARD_CONTINUE):
            im_part = t.sequence[t.prefix_length:]
            assert not any(a.is_turn and b.is_turn and a is not b for a, b in zip(im_part, im_part[1:]))
    assert (run.classification == "Corridor") == (run.trials[-1].outcome is Outcome.CORRIDOR_FOUND)


def test_trace_round_trip(trained):
    scene = sealed_ring()
    obs = project_scene(scene, scene.robot_start)
    run = run_simulation(obs, trained.models(IMVariant.PROB), cond("prob", "forward", "partial"), CRIT,
                         np.random.default_rng(3), record=True)
    text = trace_to_text(run, obs)
    back = trace_from_text(text)
    assert back.trials == [t.sequence for t in run.trials]
    assert back.outcomes == [t.outcome for t in run.trials]
    np.testing.assert_array_equal(back.initial.data, obs.data)
    assert trace_to_text(run, obs) == text


def test_corrector_used_in_predictions():
    data = np.array([[130.0, 0.0, 120.0, 10.0]])
    t = _Trial(data, models(corrector=PAPER_CORRECTOR), CRIT, record=False)
    out = t.predict(data, L)
    assert out[0, 2] == pytest.approx(0.265 * out[0, 0] + 87.0)
