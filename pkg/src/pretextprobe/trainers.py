"""Semi-supervised (joint) and self-supervised (pretrain, then fine-tune)
pipelines producing the actual test error of a task."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pretextprobe.augment import PretextTask, view_pairs
from pretextprobe.data import Dataset
from pretextprobe.errors import ConfigError, DataError
from pretextprobe.models import (
    MlpModel,
    TrainConfig,
    _optimizer,
    epoch_batches,
    evaluate_error,
    grad_consistency_mse,
    grad_cross_entropy,
    new_model,
    save_model,
    steps_per_epoch,
    supervised_stream,
    train_pretext,
    train_supervised,
)
from pretextprobe.numerics import make_rng

PIPELINES = ("semi", "self")


@dataclass(frozen=True)
class SslConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    consistency_weight: float = 1.0
    unlabeled_batch_size: int | None = None
    pretrain_epochs: int = 5
    finetune_epochs: int = 5
    linear_probe: bool = False

    def __post_init__(self):
        if not np.isfinite(self.consistency_weight) or self.consistency_weight < 0:
            raise ConfigError("consistency_weight must be finite and >= 0")
        if self.unlabeled_batch_size is not None and self.unlabeled_batch_size < 1:
            raise ConfigError("unlabeled_batch_size must be >= 1")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 1:
            raise ConfigError("need pretrain_epochs >= 0 and finetune_epochs >= 1")

    @property
    def ubatch(self) -> int:
        return self.unlabeled_batch_size or self.train.batch_size


def _require(ds: Dataset, what: str):
    if len(ds) == 0:
        raise DataError(f"empty {what} set")


def joint_gradient(model, labeled_images, labels, view_a, view_b, cfg: SslConfig):
    """CE gradient (with weight decay) plus weighted consistency gradient.
    Returns ``(ce_grads, consistency_grads, total)``."""
    _, ce = grad_cross_entropy(model, labeled_images, labels, cfg.train.weight_decay)
    if cfg.consistency_weight == 0:
        return ce, None, ce
    _, cons = grad_consistency_mse(model, view_a, view_b)
    total = [g + cfg.consistency_weight * h for g, h in zip(ce, cons)]
    return ce, cons, total


def train_semi_supervised(
    labeled: Dataset, unlabeled: Dataset, task: PretextTask, cfg: SslConfig, init: MlpModel | None = None
) -> MlpModel:
    """One labeled and one unlabeled batch per step; epochs count passes over
    the unlabeled set and labeled batches cycle. ``init`` is an optional
    starting backbone."""
    _require(labeled, "labeled")
    _require(unlabeled, "unlabeled")
    tc = cfg.train
    labels = labeled.require_labels()
    model = new_model(labeled, tc) if init is None else init.copy()
    opt = _optimizer(model, tc)
    lab_stream = supervised_stream(labeled, tc)
    unl_stream = epoch_batches(len(unlabeled), cfg.ubatch, make_rng(tc.seed, "semi-unlabeled-shuffle"))
    view_rng = make_rng(tc.seed, "semi-views")
    for _ in range(tc.epochs * steps_per_epoch(len(unlabeled), cfg.ubatch)):
        li = next(lab_stream)
        ui = next(unl_stream)
        if cfg.consistency_weight == 0:
            a = b = None
        else:
            a, b = view_pairs(unlabeled.images[ui], task, view_rng)
        _, _, grads = joint_gradient(model, labeled.images[li], labels[li], a, b, cfg)
        model.set_params(opt.step(model.params(), grads))
    return model


def pretrain(unlabeled: Dataset, task: PretextTask, cfg: SslConfig, init: MlpModel | None = None) -> MlpModel | None:
    if cfg.pretrain_epochs == 0:
        return init
    return train_pretext(unlabeled, task, cfg.train.with_(epochs=cfg.pretrain_epochs, batch_size=cfg.ubatch), init=init)


def train_self_supervised(
    unlabeled: Dataset, labeled: Dataset, task: PretextTask, cfg: SslConfig, init: MlpModel | None = None
) -> MlpModel:
    _require(labeled, "labeled")
    _require(unlabeled, "unlabeled")
    start = pretrain(unlabeled, task, cfg, init)
    return train_supervised(
        labeled, cfg.train.with_(epochs=cfg.finetune_epochs), init=start, train_encoder=not cfg.linear_probe
    )


def train_pipeline(
    pipeline: str, labeled: Dataset, unlabeled: Dataset, task: PretextTask, cfg: SslConfig, init: MlpModel | None = None
) -> MlpModel:
    if pipeline == "semi":
        return train_semi_supervised(labeled, unlabeled, task, cfg, init)
    if pipeline == "self":
        return train_self_supervised(unlabeled, labeled, task, cfg, init)
    raise ConfigError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")


def actual_performance(
    pipeline: str,
    labeled: Dataset,
    unlabeled: Dataset,
    test: Dataset,
    task: PretextTask,
    cfg: SslConfig,
    checkpoint=None,
    init: MlpModel | None = None,
) -> float:
    """Train with ``pipeline`` and return the test error."""
    model = train_pipeline(pipeline, labeled, unlabeled, task, cfg, init)
    if checkpoint is not None:
        save_model(checkpoint, model)
    return evaluate_error(model, test)
