"""The satisfaction relation for augmentation-invariance knowledge.

A labeler satisfies the knowledge at ``x`` when its argmax class agrees on
both views of every sampled view pair. Labelers are callables mapping a
batch of images ``(n, C, H, W)`` to ``n`` class indices (see
:func:`as_labeler`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from pretextprobe.augment import N_UNIFORMS, PretextTask, apply_uniforms
from pretextprobe.errors import ConfigError
from pretextprobe.numerics import make_rng

Labeler = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SatisfactionParams:
    num_pairs: int = 4

    def __post_init__(self):
        if int(self.num_pairs) != self.num_pairs or self.num_pairs < 1:
            raise ConfigError(f"num_pairs must be a positive integer, got {self.num_pairs!r}")


def as_labeler(obj) -> Labeler:
    """Accept a model with ``predict`` or a plain batch callable."""
    predict = getattr(obj, "predict", None)
    return predict if callable(predict) else obj


def _labels(labeler: Labeler, images: np.ndarray) -> np.ndarray:
    out = np.asarray(labeler(images))
    if out.ndim == 2:
        # score matrices: argmax with ties to the lowest class index
        out = out.argmax(axis=1)
    return out.astype(np.int64).reshape(-1)


def satisfaction_mask(
    labeler,
    images: np.ndarray,
    task: PretextTask,
    params: SatisfactionParams,
    rngs,
) -> np.ndarray:
    """Vectorized verdicts: entry ``i`` uses ``rngs[i]`` for image ``i``."""
    n = len(images)
    if n == 0:
        return np.zeros(0, dtype=bool)
    if task.is_identity:
        for r in rngs:
            r.random((params.num_pairs, 2, N_UNIFORMS))
        return np.ones(n, dtype=bool)
    k = params.num_pairs
    u = np.stack([r.random((k, 2, N_UNIFORMS)) for r in rngs])
    src = np.repeat(np.asarray(images, dtype=np.float32), 2 * k, axis=0)
    views = apply_uniforms(src, task, u.reshape(n * k * 2, N_UNIFORMS))
    pred = _labels(as_labeler(labeler), views).reshape(n, k, 2)
    return np.all(pred[:, :, 0] == pred[:, :, 1], axis=1)


def sample_rngs(seed: int, stage: str, ids) -> list[np.random.Generator]:
    """Per-sample streams keyed on the sample's id, so verdicts do not depend
    on which other samples share the batch."""
    return [make_rng(seed, stage, int(i)) for i in ids]


def model_satisfies(predict, x: np.ndarray, task: PretextTask, params: SatisfactionParams, rng) -> bool:
    return bool(satisfaction_mask(predict, np.asarray(x)[None], task, params, [rng])[0])


def label_satisfies(proxy, x: np.ndarray, task: PretextTask, params: SatisfactionParams, rng) -> bool:
    """Same test as :func:`model_satisfies`, with the proxy standing in for true labels."""
    return model_satisfies(proxy, x, task, params, rng)
