"""Small-sample estimates of the three knowledge indicators and the predicted risk.

Pipeline order: train the pretext model on the unlabeled sample, filter to the
learnable subset, train the proxy on the labeled set, filter to the reliable
subset, align the pretext encoder with class prototypes, measure disagreement.
A rate over an empty set is 0.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from pretextprobe.augment import PretextTask
from pretextprobe.data import Dataset
from pretextprobe.errors import ConfigError, DataError
from pretextprobe.knowledge import SatisfactionParams, sample_rngs, satisfaction_mask
from pretextprobe.models import (
    MlpModel,
    PrototypeClassifier,
    TrainConfig,
    build_prototype_classifier,
    train_pretext,
    train_supervised,
)
from pretextprobe.numerics import derive_seed


@dataclass(frozen=True)
class IndicatorEstimates:
    r_unlearnable: float
    r_unreliable: float
    r_incomplete: float
    predicted_risk: float
    n_sample: int
    n_learnable: int
    n_reliable: int

    @classmethod
    def from_rates(cls, r_unlearnable, r_unreliable, r_incomplete, n_sample=0, n_learnable=0, n_reliable=0):
        risk = predict_target_risk(r_unlearnable, r_unreliable, r_incomplete)
        return cls(float(r_unlearnable), float(r_unreliable), float(r_incomplete), risk, n_sample, n_learnable, n_reliable)

    def to_dict(self) -> dict:
        return asdict(self)


def predict_target_risk(r_unlearnable: float, r_unreliable: float, r_incomplete: float) -> float:
    """``1 - (1 - a)(1 - b)(1 - c)``."""
    rates = (r_unlearnable, r_unreliable, r_incomplete)
    for r in rates:
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"rate {r!r} outside [0, 1]")
    a, b, c = (float(r) for r in rates)
    return 1.0 - (1.0 - a) * (1.0 - b) * (1.0 - c)


def _rate(mask: np.ndarray) -> float:
    return float(np.mean(~mask)) if mask.size else 0.0


def estimate_unlearnable(pretext_model, sample: Dataset, task: PretextTask, params: SatisfactionParams, seed: int):
    """Fraction of the sample where the pretext model breaks the knowledge,
    and the subset where it holds (original order)."""
    if len(sample) == 0:
        raise DataError("empty unlabeled sample")
    ok = satisfaction_mask(pretext_model, sample.images, task, params, sample_rngs(seed, "unlearnable", sample.ids))
    return _rate(ok), sample.subset(ok)


def estimate_unreliable(proxy, learnable: Dataset, task: PretextTask, params: SatisfactionParams, seed: int):
    """Fraction of the learnable subset where the proxy's labels break the knowledge."""
    if len(learnable) == 0:
        return 0.0, learnable
    ok = satisfaction_mask(proxy, learnable.images, task, params, sample_rngs(seed, "unreliable", learnable.ids))
    return _rate(ok), learnable.subset(ok)


def estimate_incomplete(proxy, aligned: PrototypeClassifier, reliable: Dataset) -> float:
    """Disagreement between the proxy and the prototype-aligned pretext model."""
    if len(reliable) == 0:
        return 0.0
    proxy_pred = np.asarray(getattr(proxy, "predict", proxy)(reliable.images))
    aligned_pred = aligned.predict(reliable.images)
    return float(np.mean(proxy_pred != aligned_pred))


def train_proxy(labeled: Dataset, cfg: TrainConfig) -> MlpModel:
    labeled.require_coverage()
    return train_supervised(labeled, cfg)


def run_estimation_pipeline(
    labeled: Dataset,
    unlabeled_sample: Dataset,
    task: PretextTask,
    cfg: TrainConfig,
    params: SatisfactionParams | None = None,
    seed: int = 0,
    proxy: MlpModel | None = None,
    timings: dict | None = None,
    backbone: MlpModel | None = None,
) -> IndicatorEstimates:
    """End-to-end estimate for one task.

    ``cfg.seed`` drives training; ``seed`` drives the satisfaction checks. A
    pre-trained ``proxy`` may be passed to share it across tasks; ``backbone``
    is the starting point of pretext training (fresh init when None).
    """
    params = params or SatisfactionParams()
    if len(labeled) == 0:
        raise DataError("empty labeled set")
    labeled.require_coverage()
    t0 = time.perf_counter()
    pretext = train_pretext(unlabeled_sample, task, cfg.with_(seed=derive_seed(cfg.seed, "pretext")), init=backbone)
    r_unl, learnable = estimate_unlearnable(pretext, unlabeled_sample, task, params, seed)
    if proxy is None:
        proxy = train_proxy(labeled, cfg)
    r_unr, reliable = estimate_unreliable(proxy, learnable, task, params, seed)
    aligned = build_prototype_classifier(pretext, labeled)
    r_inc = estimate_incomplete(proxy, aligned, reliable)
    if timings is not None:
        timings["wall_time"] = time.perf_counter() - t0
    return IndicatorEstimates.from_rates(r_unl, r_unr, r_inc, len(unlabeled_sample), len(learnable), len(reliable))
