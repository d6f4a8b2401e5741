import numpy as np
import pytest

from srpl.errors import EmptyPseudoLabel, ShapeError
from srpl.image import GrayImage, LabelMask, ProbMap, RgbImage
from srpl.model import LinearSourceModel, ModelParams
from srpl.segmenter import (
    BoxPrompt,
    OracleSegmenter,
    derive_box_prompt,
    ensemble_initial_label,
    gray_as_rgb,
    oracle_segment,
    predict_prob,
    segment_with_prompt,
)


def flat_rgb(arr2d):
    return RgbImage(np.stack([arr2d] * 3).astype(np.float32))


# -- predict_prob --------------------------------------------------------------


def test_zero_weights_give_uniform_probabilities(rng):
    model = LinearSourceModel(ModelParams(np.zeros((2, 8)), 2))
    img = GrayImage(rng.random((6, 6)).astype(np.float32))
    p = predict_prob(model, img)
    assert np.allclose(p.data, 0.5, atol=1e-7)


def test_predict_prob_deterministic(rng):
    model = LinearSourceModel(ModelParams.init_random(2, seed=3))
    img = GrayImage(rng.random((6, 6)).astype(np.float32))
    a = predict_prob(model, img)
    b = predict_prob(model, img)
    assert np.array_equal(a.data, b.data)


def test_predict_prob_simplex_on_random_inputs(rng):
    model = LinearSourceModel(ModelParams(rng.normal(0, 3, size=(3, 8)), 3))
    for _ in range(20):
        img = GrayImage(rng.random((5, 7)).astype(np.float32))
        p = predict_prob(model, img)
        sums = p.data.sum(axis=0, dtype=np.float64)
        assert np.all(np.abs(sums - 1.0) <= 1e-6)


# -- ensemble -------------------------------------------------------------------


def test_ensemble_identical_inputs():
    p = ProbMap(np.stack([np.full((2, 2), 0.3), np.full((2, 2), 0.7)]).astype(np.float32))
    p_bar, y = ensemble_initial_label(p, p, p)
    assert np.allclose(p_bar.data, p.data, atol=1e-7)
    assert np.all(y.data == 1)


def test_ensemble_mean_hand_case():
    a = ProbMap(np.stack([np.ones((1, 1)), np.zeros((1, 1))]).astype(np.float32))
    b = ProbMap(np.stack([np.zeros((1, 1)), np.ones((1, 1))]).astype(np.float32))
    p_bar, y = ensemble_initial_label(a, b, a)
    assert p_bar.data[0, 0, 0] == pytest.approx(2.0 / 3.0, abs=1e-7)
    assert p_bar.data[1, 0, 0] == pytest.approx(1.0 / 3.0, abs=1e-7)
    assert y.data[0, 0] == 0


def test_ensemble_tie_breaks_to_lowest_class():
    h = ProbMap(np.full((2, 1, 1), 0.5, dtype=np.float32))
    _, y = ensemble_initial_label(h, h, h)
    assert y.data[0, 0] == 0


def test_ensemble_permutation_symmetric(rng):
    def rand_prob():
        raw = rng.random((3, 4, 4))
        return ProbMap((raw / raw.sum(axis=0)).astype(np.float32))

    a, b, c = rand_prob(), rand_prob(), rand_prob()
    p1, y1 = ensemble_initial_label(a, b, c)
    p2, y2 = ensemble_initial_label(c, a, b)
    assert np.array_equal(p1.data, p2.data)
    assert np.array_equal(y1.data, y2.data)


def test_ensemble_shape_mismatch():
    a = ProbMap(np.full((2, 2, 2), 0.5, dtype=np.float32))
    b = ProbMap(np.full((2, 3, 3), 0.5, dtype=np.float32))
    with pytest.raises(ShapeError):
        ensemble_initial_label(a, b, a)


# -- box prompts -----------------------------------------------------------------


def test_box_prompt_hand_case():
    mask = np.zeros((20, 20), dtype=np.uint8)
    mask[3:6, 3:8] = 1  # rows 3-5, cols 3-7
    box = derive_box_prompt(LabelMask(mask, 2), 1, margin=2)
    assert (box.xmin, box.ymin, box.xmax, box.ymax) == (1, 1, 9, 7)


def test_box_prompt_clamps_at_border():
    mask = np.zeros((10, 10), dtype=np.uint8)
    mask[0, 0] = 1
    box = derive_box_prompt(LabelMask(mask, 2), 1, margin=5)
    assert box.xmin == 0 and box.ymin == 0
    assert box.xmax == 5 and box.ymax == 5


def test_box_prompt_empty_mask():
    with pytest.raises(EmptyPseudoLabel):
        derive_box_prompt(LabelMask(np.zeros((4, 4), dtype=np.uint8), 2), 1, 2)


def test_box_prompt_margin_zero_is_tight():
    mask = np.zeros((12, 12), dtype=np.uint8)
    mask[4:7, 5:9] = 1
    box = derive_box_prompt(LabelMask(mask, 2), 1, margin=0)
    assert (box.xmin, box.ymin, box.xmax, box.ymax) == (5, 4, 8, 6)
    # shrinking any side excludes at least one foreground pixel
    assert mask[:, box.xmin].any() and mask[:, box.xmax].any()
    assert mask[box.ymin, :].any() and mask[box.ymax, :].any()


def test_box_prompt_validation():
    with pytest.raises(ValueError):
        BoxPrompt(3, 0, 2, 5)
    with pytest.raises(ValueError):
        BoxPrompt(-1, 0, 2, 5)
    with pytest.raises(ShapeError):
        BoxPrompt(0, 0, 8, 8).check_within(8, 8)


# -- oracle segmenter --------------------------------------------------------------


def test_oracle_recovers_bright_disk():
    ys, xs = np.mgrid[0:32, 0:32]
    disk = ((xs - 16) ** 2 + (ys - 14) ** 2) <= 49
    img = np.where(disk, 0.8, 0.2).astype(np.float32)
    mask = oracle_segment(flat_rgb(img), BoxPrompt(6, 4, 26, 24))
    assert np.array_equal(mask.data.astype(bool), disk)


def test_oracle_uniform_box_gives_empty_mask():
    img = np.full((16, 16), 0.5, dtype=np.float32)
    mask = oracle_segment(flat_rgb(img), BoxPrompt(2, 2, 9, 9))
    assert mask.data.sum() == 0


def test_oracle_keeps_largest_blob_only():
    img = np.full((32, 32), 0.1, dtype=np.float32)
    img[5:9, 5:9] = 0.9
    img[20:28, 18:28] = 0.9
    mask = oracle_segment(flat_rgb(img), BoxPrompt(0, 0, 31, 31))
    assert mask.data.sum() == 80
    assert mask.data[22, 20] == 1 and mask.data[6, 6] == 0


def test_oracle_uses_4_connectivity():
    img = np.full((8, 8), 0.1, dtype=np.float32)
    img[1, 1] = img[2, 2] = img[3, 3] = 0.9  # diagonal chain: 3 components of size 1
    img[5:7, 5:7] = 0.9  # solid 2x2
    mask = oracle_segment(flat_rgb(img), BoxPrompt(0, 0, 7, 7))
    assert mask.data.sum() == 4
    assert mask.data[5, 5] == 1


def test_oracle_zero_outside_box():
    img = np.full((16, 16), 0.1, dtype=np.float32)
    img[2:14, 2:14] = 0.9
    mask = oracle_segment(flat_rgb(img), BoxPrompt(4, 4, 11, 11))
    outside = np.ones((16, 16), dtype=bool)
    outside[4:12, 4:12] = False
    assert mask.data[outside].sum() == 0


def test_oracle_deterministic(rng):
    img = rng.random((20, 20)).astype(np.float32)
    box = BoxPrompt(3, 3, 16, 16)
    a = oracle_segment(flat_rgb(img), box)
    b = oracle_segment(flat_rgb(img), box)
    assert np.array_equal(a.data, b.data)


# -- prompt wrapper ------------------------------------------------------------------


class LeakySegmenter:
    """Backend that marks one pixel outside the prompt box."""

    kind = "oracle"

    def __init__(self):
        self.clipped_responses = 0

    def segment_raw(self, img, box):
        data = np.zeros((img.height, img.width), dtype=np.uint8)
        data[box.ymin : box.ymax + 1, box.xmin : box.xmax + 1] = 1
        data[0, 0] = 1  # leak
        return LabelMask(data, 2)


def test_segment_with_prompt_clips_and_counts(rng):
    seg = LeakySegmenter()
    img = flat_rgb(rng.random((8, 8)).astype(np.float32))
    box = BoxPrompt(3, 3, 6, 6)
    mask = segment_with_prompt(seg, img, box)
    assert mask.data[0, 0] == 0
    assert seg.clipped_responses == 1
    inside = mask.data[3:7, 3:7]
    assert inside.sum() == 16


def test_segment_with_prompt_oracle_never_clips(rng):
    seg = OracleSegmenter()
    img = flat_rgb(rng.random((12, 12)).astype(np.float32))
    segment_with_prompt(seg, img, BoxPrompt(2, 2, 9, 9))
    assert seg.clipped_responses == 0


def test_gray_as_rgb_replicates(rng):
    img = GrayImage(rng.random((4, 4)).astype(np.float32))
    rgb = gray_as_rgb(img)
    assert np.array_equal(rgb.data[0], img.data)
    assert np.array_equal(rgb.data[1], img.data)
    assert np.array_equal(rgb.data[2], img.data)
