import numpy as np
import pytest

from pretextprobe.augment import N_UNIFORMS, PretextTask, task_grid
from pretextprobe.errors import ConfigError
from pretextprobe.knowledge import (
    SatisfactionParams,
    label_satisfies,
    model_satisfies,
    sample_rngs,
    satisfaction_mask,
)
from pretextprobe.models import init_model
from pretextprobe.worlds.synth import SynthSpec, gen_synthetic

from conftest import random_images

P4 = SatisfactionParams(4)


def constant(images):
    return np.zeros(len(images), dtype=np.int64)


def left_brighter(images):
    """Class 1 when the left pixel of a 1x1x2 image is brighter."""
    return (images[:, 0, 0, 0] > images[:, 0, 0, 1]).astype(np.int64)


def bright_pixel_count(images):
    """Depends only on the multiset of pixel values, so flips cannot change it."""
    return (images > 0.5).reshape(len(images), -1).sum(axis=1) % 3


def test_params_validation():
    for bad in (0, -1, 1.5):
        with pytest.raises(ConfigError):
            SatisfactionParams(bad)
    assert SatisfactionParams().num_pairs == 4


@pytest.mark.parametrize("task", [t for t in task_grid() if t.strength in (1, 5, 10)], ids=lambda t: t.name)
def test_constant_predictor_always_satisfies(task, rng):
    x = random_images(rng, n=1)[0]
    assert model_satisfies(constant, x, task, P4, rng)
    assert label_satisfies(constant, x, task, P4, rng)


@pytest.mark.parametrize("task", [t for t in task_grid() if t.is_identity], ids=lambda t: t.name)
def test_identity_task_always_satisfies(task, rng):
    model = init_model(3 * 6 * 6, 5, hidden=(8,), embedding_dim=4, seed=3)
    x = random_images(rng, n=1)[0]
    assert model_satisfies(model, x, task, P4, rng)
    assert label_satisfies(model, x, task, P4, rng)


def test_parity_predictor_by_hand_enumeration():
    x = np.array([[[0.9, 0.1]]], dtype=np.float32)
    task = PretextTask("RandomHorizontalFlip", 5)
    for seed in range(40):
        verdict = model_satisfies(left_brighter, x, task, P4, np.random.default_rng(seed))
        # replay the draws: a view is flipped when its first uniform is < 0.5,
        # and the predictor's class flips with the image
        u = np.random.default_rng(seed).random((4, 2, N_UNIFORMS))
        flipped = u[:, :, 0] < 0.5
        assert verdict == bool(np.all(flipped[:, 0] == flipped[:, 1]))


def test_parity_predictor_fails_for_most_seeds():
    x = np.array([[[0.9, 0.1]]], dtype=np.float32)
    task = PretextTask("RandomHorizontalFlip", 5)
    verdicts = [model_satisfies(left_brighter, x, task, P4, np.random.default_rng(s)) for s in range(400)]
    # one pair agrees with probability 1/2, so four pairs all agree with probability 1/16
    assert np.mean(verdicts) == pytest.approx(1 / 16, abs=0.04)


def test_certain_flip_gives_identical_views():
    # with p = 1 both views are the flipped image, so even the parity predictor agrees
    x = np.array([[[0.9, 0.1]]], dtype=np.float32)
    assert model_satisfies(left_brighter, x, PretextTask("RandomHorizontalFlip", 10), P4, np.random.default_rng(0))


@pytest.mark.parametrize("family", ["RandomHorizontalFlip", "RandomVerticalFlip"])
def test_invariant_predictor_always_satisfies(family, rng):
    x = random_images(rng, n=50)
    mask = satisfaction_mask(bright_pixel_count, x, PretextTask(family, 5), SatisfactionParams(8), sample_rngs(1, "t", range(50)))
    assert mask.all()


def test_score_matrix_ties_go_to_lowest_class(rng):
    x = random_images(rng, n=10)
    tied = lambda imgs: np.ones((len(imgs), 3))  # noqa: E731
    assert satisfaction_mask(tied, x, PretextTask("RandomRotation", 10), P4, sample_rngs(0, "t", range(10))).all()


def test_same_seed_same_verdict(rng):
    model = init_model(3 * 6 * 6, 4, hidden=(16,), embedding_dim=8, seed=1)
    x = random_images(rng, n=30)
    t = PretextTask("RandomRotation", 6)
    a = satisfaction_mask(model, x, t, P4, sample_rngs(11, "s", range(30)))
    b = satisfaction_mask(model, x, t, P4, sample_rngs(11, "s", range(30)))
    assert np.array_equal(a, b)


def test_batch_verdicts_match_single_queries(rng):
    model = init_model(3 * 6 * 6, 4, hidden=(16,), embedding_dim=8, seed=1)
    x = random_images(rng, n=12)
    t = PretextTask("Shear", 7)
    batch = satisfaction_mask(model, x, t, P4, sample_rngs(2, "s", range(12)))
    single = [model_satisfies(model, x[i], t, P4, sample_rngs(2, "s", [i])[0]) for i in range(12)]
    assert batch.tolist() == single


def test_rate_non_increasing_in_num_pairs():
    model = init_model(3 * 6 * 6, 4, hidden=(16,), embedding_dim=8, seed=5)
    x = np.random.default_rng(0).random((1500, 3, 6, 6)).astype(np.float32)
    t = PretextTask("RandomRotation", 5)
    rates = [
        satisfaction_mask(model, x, t, SatisfactionParams(k), sample_rngs(k, "mono", range(len(x)))).mean()
        for k in (1, 2, 3, 4, 6)
    ]
    assert 0.0 < rates[-1] < rates[0] < 1.0
    for a, b in zip(rates, rates[1:]):
        assert b <= a + 0.02


@pytest.mark.parametrize(
    "task",
    [PretextTask(f, 10) for f in ("RandomRotation", "RandomHorizontalFlip", "RandomVerticalFlip", "Saturation")]
    + [PretextTask("Hue", 5)],
    ids=lambda t: t.name,
)
def test_truth_of_invariant_world_satisfies_at_extremes(task):
    w = gen_synthetic(SynthSpec(unlabeled_per_class=25, invariant_class_fraction=1.0))
    x = w.unlabeled.images
    truth = w.truth.predict(x)
    from itertools import product

    from pretextprobe.augment import apply_uniforms

    for corner in product([0.0, 1.0 - 1e-12], repeat=N_UNIFORMS):
        views = apply_uniforms(x, task, np.tile(corner, (len(x), 1)))
        assert np.array_equal(w.truth.predict(views), truth)
    mask = satisfaction_mask(w.truth, x, task, P4, sample_rngs(0, "truth", w.unlabeled.ids))
    assert mask.all()
