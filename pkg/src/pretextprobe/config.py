"""Benchmark configuration: one JSON document, reference defaults, named presets.

Layout::

    {"train": {...}, "model": {...}, "proxy_epochs": null,
     "ssl": {...}, "satisfaction": {...}, "sampling": {...},
     "pipelines": [...], "tasks": "all", "synth": {...}, "data": null,
     "workers": 1, "checkpoints": true}

``workers`` and ``checkpoints`` do not affect results and are left out of the
config hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from pretextprobe.augment import PretextTask, parse_tasks
from pretextprobe.errors import ConfigError
from pretextprobe.knowledge import SatisfactionParams
from pretextprobe.models import TrainConfig
from pretextprobe.trainers import PIPELINES, SslConfig
from pretextprobe.worlds.synth import SynthSpec

NON_SEMANTIC = ("workers", "checkpoints")
BACKBONES = ("proxy", "none")

DEFAULTS: dict = {
    "train": {
        "batch_size": 64,
        "epochs": 5,
        "learning_rate": 5e-5,
        "weight_decay": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
    },
    "model": {"hidden": [128], "embedding_dim": 64},
    "proxy_epochs": None,
    "ssl": {
        "semi_epochs": 5,
        "consistency_weight": 1.0,
        "unlabeled_batch_size": None,
        "pretrain_epochs": 5,
        "finetune_epochs": 5,
        "linear_probe": False,
        "backbone": "proxy",
    },
    "satisfaction": {"num_pairs": 4},
    "sampling": {"labeled_per_class": 5, "unlabeled_per_class": 50},
    "pipelines": list(PIPELINES),
    "tasks": "all",
    "synth": asdict(SynthSpec()),
    "data": None,
    "workers": 1,
    "checkpoints": True,
}

DESK_FAMILIES = ("RandomResizedCrop", "RandomRotation", "Brightness", "Contrast")
DESK_STRENGTHS = (0, 2, 4, 6, 8, 10)

# Scaled for an MLP on 3x8x8 synthetic images: the reference learning rate is
# tuned for fine-tuning a large pretrained network and barely moves a small one.
DESK: dict = {
    "train": {"batch_size": 32, "epochs": 20, "learning_rate": 1e-3, "weight_decay": 0.0},
    "proxy_epochs": 60,
    "ssl": {"semi_epochs": 3, "pretrain_epochs": 3, "finetune_epochs": 5},
    "tasks": [f"{f}:{s}" for f in DESK_FAMILIES for s in DESK_STRENGTHS],
    "synth": {
        "unlabeled_per_class": 300,
        "test_per_class": 100,
        "invariant_class_fraction": 0.75,
        "noise": 0.15,
        "nuisance": 1.5,
    },
}

PRESETS = {"reference": {}, "desk": DESK}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class BenchConfig:
    doc: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.doc = _merge(DEFAULTS, self.doc)
        # build everything once so errors surface at load time
        self.train_config()
        self.ssl_config()
        self.satisfaction()
        self.task_list()
        if self.doc["data"] is None:
            self.synth_spec()
        bad = [p for p in self.pipelines if p not in PIPELINES]
        if bad or not self.pipelines:
            raise ConfigError(f"pipelines must be a non-empty subset of {PIPELINES}, got {self.pipelines}")
        if self.doc["ssl"]["backbone"] not in BACKBONES:
            raise ConfigError(f"ssl.backbone must be one of {BACKBONES}")
        s = self.doc["sampling"]
        if s["labeled_per_class"] < 1 or s["unlabeled_per_class"] < 1:
            raise ConfigError("sampling sizes must be >= 1")
        if int(self.doc["workers"]) < 1:
            raise ConfigError("workers must be >= 1")

    # construction
    @classmethod
    def from_dict(cls, doc: dict, base: str | dict = "reference") -> "BenchConfig":
        start = PRESETS[base] if isinstance(base, str) else base
        return cls(_merge(_merge(DEFAULTS, start), doc))

    @classmethod
    def preset(cls, name: str) -> "BenchConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
        return cls(copy.deepcopy(PRESETS[name]))

    @classmethod
    def load(cls, source: str | Path | None) -> "BenchConfig":
        """A preset name, a JSON file path, or None for the reference defaults.
        A file may name a starting preset under the key ``"preset"``."""
        if source is None:
            return cls()
        if str(source) in PRESETS:
            return cls.preset(str(source))
        path = Path(source)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        base = doc.pop("preset", "reference")
        if base not in PRESETS:
            raise ConfigError(f"unknown preset {base!r}")
        return cls.from_dict(doc, base)

    def override(self, **changes) -> "BenchConfig":
        return BenchConfig(_merge(self.doc, changes))

    # views
    def train_config(self, seed: int = 0) -> TrainConfig:
        t, m = self.doc["train"], self.doc["model"]
        return TrainConfig(
            batch_size=int(t["batch_size"]),
            epochs=int(t["epochs"]),
            learning_rate=float(t["learning_rate"]),
            weight_decay=float(t["weight_decay"]),
            beta1=float(t["beta1"]),
            beta2=float(t["beta2"]),
            eps=float(t["eps"]),
            seed=seed,
            hidden=tuple(m["hidden"]),
            embedding_dim=int(m["embedding_dim"]),
        )

    def proxy_config(self, seed: int = 0) -> TrainConfig:
        tc = self.train_config(seed)
        epochs = self.doc["proxy_epochs"]
        return tc if epochs is None else tc.with_(epochs=int(epochs))

    def ssl_config(self, seed: int = 0) -> SslConfig:
        s = self.doc["ssl"]
        return SslConfig(
            train=self.train_config(seed).with_(epochs=int(s["semi_epochs"])),
            consistency_weight=float(s["consistency_weight"]),
            unlabeled_batch_size=s["unlabeled_batch_size"],
            pretrain_epochs=int(s["pretrain_epochs"]),
            finetune_epochs=int(s["finetune_epochs"]),
            linear_probe=bool(s["linear_probe"]),
        )

    def satisfaction(self) -> SatisfactionParams:
        return SatisfactionParams(int(self.doc["satisfaction"]["num_pairs"]))

    def synth_spec(self, seed: int | None = None) -> SynthSpec:
        d = dict(self.doc["synth"])
        if seed is not None:
            d["seed"] = seed
        try:
            return SynthSpec(**d)
        except TypeError as exc:
            raise ConfigError(f"bad synth section: {exc}") from None

    def task_list(self) -> list[PretextTask]:
        return parse_tasks(self.doc["tasks"])

    @property
    def pipelines(self) -> list[str]:
        return list(self.doc["pipelines"])

    @property
    def warm_start(self) -> bool:
        return self.doc["ssl"]["backbone"] == "proxy"

    @property
    def workers(self) -> int:
        return int(self.doc["workers"])

    def semantic(self) -> dict:
        return {k: v for k, v in self.doc.items() if k not in NON_SEMANTIC}

    def hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)
