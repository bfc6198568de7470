import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affordsim.forward_models import PAPER_FM, TactileFM, predict_array
from affordsim.inverse_model import (BLOB_H, BLOB_W, PAIRS, BlobImage, CostParams, IMTrainConfig,
                                     IMTrainingExample, IMVariant, InverseModel, RegressionModule,
                                     build_im_training_set, decide_from_q, goodness_from_q, im_decide,
                                     im_from_text, im_regression_q, im_to_text, prob_from_q, render_blob_array,
                                     render_blob_image, short_term_search, to_pgm, train_inverse_model)
from affordsim.sensor import CameraModel, SensoryState
from affordsim.world import MotorCommand, generate_scene

F, L, R = MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT
TACTILE = TactileFM(215.0)


def blob_oracle(data, slack):
    """Pixel (r, c) is set when its centre lies within the (slightly scaled) disk, wrapping columns."""
    img = np.zeros((BLOB_H, BLOB_W), dtype=bool)
    rows, cols = np.mgrid[0:BLOB_H, 0:BLOB_W]
    for w, x, y, _h in np.asarray(data, dtype=float).reshape(-1, 4):
        r = 0.5 * w * BLOB_W / 1571.0
        cc = BLOB_W // 2 + x * BLOB_W / 1571.0
        cr = y * BLOB_H / 214.0
        for k in (-2, -1, 0, 1, 2):
            img |= (cols + k * BLOB_W - cc) ** 2 + (rows - cr) ** 2 <= r * r * slack
    return img


def test_empty_blob():
    assert not render_blob_array(np.zeros((0, 4))).any()
    assert render_blob_image(SensoryState([], np.zeros((0, 4)))).pixels.shape == (BLOB_H, BLOB_W)


def test_single_disk_geometry():
    img = render_blob_array(np.array([[100.0, 0.0, 120.0, 10.0]]))
    r = 0.5 * 100 * BLOB_W / 1571
    assert r == pytest.approx(6.27, abs=0.01)
    rows, cols = np.nonzero(img)
    assert cols.mean() == pytest.approx(98, abs=0.01)
    assert rows.mean() == pytest.approx(120 * 42 / 214, abs=0.3)
    assert img.sum() == pytest.approx(math.pi * r * r, rel=0.1)


def test_disk_wraps_across_edges():
    img = render_blob_array(np.array([[100.0, 785.0, 120.0, 10.0]]))
    assert img[:, 0].any() and img[:, -1].any()
    assert not img[:, BLOB_W // 2].any()


segs = st.tuples(st.floats(0.5, 900), st.floats(-785.4, 785.5), st.floats(-20, 240), st.just(0.0))


@given(st.lists(segs, max_size=5))
def test_blob_matches_pixel_oracle(rows):
    data = np.array(rows).reshape(-1, 4)
    img = render_blob_array(data)
    inner, outer = blob_oracle(data, 1 - 1e-9), blob_oracle(data, 1 + 1e-9)
    assert np.all(img[inner]) and not np.any(img[~outer])


def test_pgm_export():
    img = render_blob_array(np.array([[100.0, 0.0, 120.0, 10.0]]))
    pgm = to_pgm(img).decode()
    assert pgm.startswith("P2\n197 42\n255\n")


# --- action selection --------------------------------------------------------

def toy_model(seed=0):
    rng = np.random.default_rng(seed)
    mods = tuple(RegressionModule(p, rng.random(BLOB_H * BLOB_W), rng.normal(0, 1e-3, BLOB_H * BLOB_W))
                 for p in PAIRS)
    return InverseModel(mods)


def test_mean_blob_gives_half():
    im = toy_model()
    for m in im.modules:
        assert im_regression_q(m, m.mean) == pytest.approx(0.5)
    np.testing.assert_allclose(im.canonical_q(im.modules[0].mean)[0], 0.5)


def test_canonical_q_matches_modules():
    im = toy_model(1)
    blob = render_blob_image(SensoryState([0, 1], [[80.0, -200.0, 110.0, 10.0], [120.0, 300.0, 130.0, 20.0]]))
    np.testing.assert_allclose(im.canonical_q(blob), [im_regression_q(m, blob) for m in im.modules], atol=1e-10)


def test_goodness_examples():
    g = goodness_from_q((0.8, 0.6, 0.5))
    assert g[0] == pytest.approx(0.6)
    assert goodness_from_q((0.5, 0.5, 0.5)) == (0.5, 0.5, 0.5)


def six_q(q):
    """All ordered-pair estimates from the three canonical ones (reverse pairs by 1 - q)."""
    fl, fr, lr = q
    return {(F, L): fl, (L, F): 1 - fl, (F, R): fr, (R, F): 1 - fr, (L, R): lr, (R, L): 1 - lr}


def argmax_goodness(six):
    g = [min(six[(m, o)] for o in (F, L, R) if o is not m) for m in (F, L, R)]
    return (F, L, R)[int(np.argmax(g))]


@given(st.tuples(*[st.floats(-0.5, 1.5)] * 3), st.floats(-3, 3))
def test_det_invariant_under_common_shift(q, c):
    six = six_q(q)
    shifted = {k: v + c for k, v in six.items()}
    assert argmax_goodness(shifted) == argmax_goodness(six)
    if len(set(goodness_from_q(q))) == 3:
        assert decide_from_q(IMVariant.DET, q, None) == argmax_goodness(six)


@given(st.tuples(*[st.floats(-0.5, 1.5)] * 3))
def test_det_invariant_under_monotone_transform(q):
    six = six_q(q)
    warped = {k: math.atan(5 * v) + v ** 3 for k, v in six.items()}
    assert argmax_goodness(warped) == argmax_goodness(six)


def test_det_tie_break_prefers_forward():
    assert decide_from_q(IMVariant.DET, (0.5, 0.5, 0.5), None) is F


@given(st.tuples(*[st.floats(-1, 2)] * 3))
def test_prob_distribution_valid(q):
    p = prob_from_q(q)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_prob_examples():
    np.testing.assert_allclose(prob_from_q((1.0, 1.0, 0.3)), (1, 0, 0))
    np.testing.assert_allclose(prob_from_q((0.5, 0.5, 0.5)), (1 / 3, 1 / 3, 1 / 3))


def test_prob_sampling_frequencies():
    rng = np.random.default_rng(4)
    q = (0.7, 0.4, 0.6)
    p = prob_from_q(q)
    draws = [decide_from_q(IMVariant.PROB, q, rng) for _ in range(30000)]
    freq = [sum(d is c for d in draws) / len(draws) for c in (F, L, R)]
    np.testing.assert_allclose(freq, p, atol=0.01)


def test_random_ignores_blob():
    im = toy_model().with_variant(IMVariant.RANDOM)
    a = [im_decide(im, None, np.random.default_rng(5)) for _ in range(5)]
    b = [im_decide(im, np.ones(BLOB_H * BLOB_W), np.random.default_rng(5)) for _ in range(5)]
    assert a == b


def test_model_validation():
    mods = toy_model().modules
    with pytest.raises(ValueError):
        InverseModel(mods[::-1])
    with pytest.raises(ValueError):
        InverseModel(mods, random_probs=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        RegressionModule((F, L), np.zeros(3), np.zeros(4))


# --- short-term search -------------------------------------------------------

def test_open_space_goes_forward():
    assert short_term_search(np.zeros((0, 4)), PAPER_FM, TACTILE) is F
    assert short_term_search(np.array([[30.0, 500.0, 95.0, 5.0]]), PAPER_FM, TACTILE) is F


def test_blocked_ahead_turns_left():
    state = np.array([[175.0, 220.0, 170.0, 10.0]])
    assert predict_array(PAPER_FM, state, F)[0, 0] > 215
    s = state
    for cmd in [L] + [F] * 6:
        s = predict_array(PAPER_FM, s, cmd)
        assert s[0, 0] <= 215
    assert CostParams().sequence_cost([L] + [F] * 6) == 30
    assert CostParams().sequence_cost([L, L] + [F] * 5) == 50
    assert short_term_search(state, PAPER_FM, TACTILE) is L


def test_enclosed_returns_none():
    state = np.array([[300.0, 0.0, 180.0, 10.0]])
    assert short_term_search(state, PAPER_FM, TACTILE) is None


def test_costs():
    c = CostParams()
    assert c.sequence_cost([F] * 7) == 0
    assert c.sequence_cost([L, R]) == 20 + 20 + 1000
    assert c.sequence_cost([F, L, F]) == 20 + 10 + 10
    with pytest.raises(ValueError):
        CostParams(rotation=-1)
    with pytest.raises(ValueError):
        short_term_search(np.zeros((0, 4)), PAPER_FM, TACTILE, depth=0)


# --- training ----------------------------------------------------------------

def test_label_partition():
    rng = np.random.default_rng(0)
    labels = [F] * 30 + [L] * 20 + [R] * 25
    ex = [IMTrainingExample(BlobImage(rng.random((BLOB_H, BLOB_W)) < 0.1), lab) for lab in labels]
    im = train_inverse_model(ex, 2)
    assert [m.pair for m in im.modules] == list(PAIRS)
    # each module sees only the examples of its own pair
    counts = {p: sum(e.label in p for e in ex) for p in PAIRS}
    assert counts == {(F, L): 50, (F, R): 55, (L, R): 45}


def test_training_set_deterministic():
    cam = CameraModel()
    cfg = IMTrainConfig(n_starts=2, n_steps=5)
    scenes = [generate_scene("DeadEnd", 0)]
    a = build_im_training_set(scenes, PAPER_FM, TACTILE, cam, cfg, np.random.default_rng(1))
    b = build_im_training_set(scenes, PAPER_FM, TACTILE, cam, cfg, np.random.default_rng(1))
    assert 0 < len(a) <= 10
    assert [e.label for e in a] == [e.label for e in b]
    assert all(np.array_equal(x.blob.pixels, y.blob.pixels) for x, y in zip(a, b))


def test_im_text_round_trip():
    im = toy_model(3)
    back = im_from_text(im_to_text(im))
    for m1, m2 in zip(im.modules, back.modules):
        assert m1.pair == m2.pair
        np.testing.assert_array_equal(m1.beta, m2.beta)
        np.testing.assert_array_equal(m1.mean, m2.mean)
