"""Synthetic image worlds with known ground truth.

Invariant classes are centred, symmetric coloured shapes. Each
marked (non-invariant) class copies a partner's shape and adds a saturated
2x2 marker in the top-left corner; the true label requires the marker to
be there, so any transform that moves or recolours it turns the true label
into the partner's. Every invariant class has its own shape; classes inside
one knowledge cell also share a colour, so only the shape tells them apart.

The ground-truth labeler checks the marker first, then takes the nearest
template among transformed copies of every invariant class.
"""

from __future__ import annotations

import colorsys
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from pretextprobe.augment import FAMILIES, PretextTask, apply_params, centered_affine
from pretextprobe.data import Dataset
from pretextprobe.errors import ConfigError
from pretextprobe.numerics import make_rng

MARKER_COLORS = np.array(
    [[1, 0, 1], [0, 1, 1], [1, 1, 0], [1, 1, 1], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64
)
MARKER_TOL = 0.2
SHAPES = ("disk", "ring", "plus", "diamond")


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    labeled_per_class: int = 5
    unlabeled_per_class: int = 400
    test_per_class: int = 100
    image_size: int = 8
    invariant_class_fraction: float = 1.0
    classes_per_knowledge_cell: int = 1
    noise: float = 0.05
    nuisance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if min(self.labeled_per_class, self.unlabeled_per_class, self.test_per_class) < 1:
            raise ConfigError("per-class sample counts must be positive")
        if self.image_size < 4:
            raise ConfigError("image_size must be >= 4")
        if not 0.0 <= self.invariant_class_fraction <= 1.0:
            raise ConfigError("invariant_class_fraction must be in [0, 1]")
        if self.classes_per_knowledge_cell < 1:
            raise ConfigError("classes_per_knowledge_cell must be >= 1")
        if self.noise < 0 or self.nuisance < 0:
            raise ConfigError("noise and nuisance must be >= 0")
        if self.num_marked > len(MARKER_COLORS):
            raise ConfigError(f"at most {len(MARKER_COLORS)} non-invariant classes are supported")

    @property
    def num_invariant(self) -> int:
        return max(1, int(round(self.num_classes * self.invariant_class_fraction)))

    @property
    def num_marked(self) -> int:
        return self.num_classes - self.num_invariant

    def to_dict(self) -> dict:
        return asdict(self)


def _shape_mask(kind: str, size: int) -> np.ndarray:
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    dx, dy = (xx - c) / (size / 8.0), (yy - c) / (size / 8.0)
    r = np.hypot(dx, dy)
    if kind == "disk":
        m = r <= 2.3
    elif kind == "ring":
        m = (r >= 1.6) & (r <= 3.2)
    elif kind == "plus":
        m = ((np.abs(dx) <= 0.6) | (np.abs(dy) <= 0.6)) & (r <= 3.1)
    else:
        m = np.abs(dx) + np.abs(dy) <= 3.0
    return m.astype(np.float64)


def _cell_color(j: int, n_cells: int) -> np.ndarray:
    # channels stay in [0.315, 0.7], at least 0.3 from every marker colour
    return np.array(colorsys.hsv_to_rgb(j / n_cells, 0.55, 0.7))


def class_templates(spec: SynthSpec, with_markers: bool = True) -> np.ndarray:
    """Noise-free (K, 3, S, S) templates."""
    k_inv, size = spec.num_invariant, spec.image_size
    m = spec.classes_per_knowledge_cell
    n_cells = -(-k_inv // m)
    out = np.zeros((spec.num_classes, 3, size, size))
    for c in range(k_inv):
        color = _cell_color(c // m, n_cells)
        shape = SHAPES[c % len(SHAPES)]
        out[c] = color[:, None, None] * _shape_mask(shape, size)[None]
    for i in range(spec.num_marked):
        c = k_inv + i
        out[c] = out[i % k_inv]
        if with_markers:
            out[c][:, 0:2, 0:2] = MARKER_COLORS[i][:, None, None]
    return out


def add_markers(spec: SynthSpec, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
    out = images.copy()
    for i in range(spec.num_marked):
        rows = labels == spec.num_invariant + i
        out[rows, :, 0:2, 0:2] = MARKER_COLORS[i][:, None, None]
    return out


def partner_of(spec: SynthSpec, c: int) -> int:
    return c if c < spec.num_invariant else (c - spec.num_invariant) % spec.num_invariant


def _orbit_params(family: str, size: int) -> list[dict]:
    """Parameter grid spanning the family's strongest setting."""
    g = np.linspace
    if family == "RandomResizedCrop":
        pts = [(a, px, py) for a in g(0.1, 1.0, 10) for px in g(0, 1, 5) for py in g(0, 1, 5)]
        keys = ("area", "pos_x", "pos_y")
    elif family == "RandomRotation":
        pts, keys = [(d,) for d in g(-180, 180, 37)], ("degrees",)
    elif family == "Translate":
        steps = g(-1, 1, 2 * size + 1)
        pts, keys = [(a, b) for a in steps for b in steps], ("dx", "dy")
    elif family == "Shear":
        steps = g(-np.pi / 4, np.pi / 4, 9)
        pts, keys = [(a, b) for a in steps for b in steps], ("shear_x", "shear_y")
    elif family == "Scale":
        pts, keys = [(f,) for f in g(0.1, 1.9, 19)], ("factor",)
    elif family in ("Brightness", "Contrast", "Saturation"):
        pts, keys = [(f,) for f in g(0.0, 2.0, 21)], ("factor",)
    elif family == "Hue":
        pts, keys = [(o,) for o in g(-0.5, 0.5, 21)], ("offset",)
    else:
        pts, keys = [(True,)], ("flip",)
    return [dict(zip(keys, p)) for p in pts]


def orbit_anchors(templates: np.ndarray, size: int) -> np.ndarray:
    """Each template under every grid transform of every family: (K, A, D)."""
    k = len(templates)
    per_class = [templates.reshape(k, -1)]
    for fam, (_, hi) in FAMILIES.items():
        task = PretextTask(fam, hi)
        for p in _orbit_params(fam, size):
            arr = {key: np.full(k, val) for key, val in p.items()}
            per_class.append(apply_params(templates.astype(np.float32), task, arr).reshape(k, -1).astype(np.float64))
    both = [apply_params(templates.astype(np.float32), PretextTask("RandomHorizontalFlip", 10), {"flip": np.ones(k, bool)})]
    both = apply_params(both[0], PretextTask("RandomVerticalFlip", 10), {"flip": np.ones(k, bool)})
    per_class.append(both.reshape(k, -1).astype(np.float64))
    return np.stack(per_class, axis=1)


class SynthTruth:
    """Pixel-rule ground truth for a synthetic world; usable as a labeler."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.templates = class_templates(spec)

    @cached_property
    def anchors(self) -> np.ndarray:
        return orbit_anchors(self.templates[: self.spec.num_invariant], self.spec.image_size)

    def marker_class(self, images: np.ndarray) -> np.ndarray:
        """Marked class whose marker sits in place, else -1."""
        block = np.asarray(images, dtype=np.float64)[:, :, 0:2, 0:2].mean(axis=(2, 3))
        out = np.full(len(images), -1, dtype=np.int64)
        for i in range(self.spec.num_marked):
            hit = np.max(np.abs(block - MARKER_COLORS[i]), axis=1) <= MARKER_TOL
            out[(out < 0) & hit] = self.spec.num_invariant + i
        return out

    def base_class(self, images: np.ndarray, chunk: int = 512) -> np.ndarray:
        a = self.anchors  # (K, A, D)
        k, n_a, d = a.shape
        flat_a = a.reshape(k * n_a, d)
        a2 = (flat_a * flat_a).sum(axis=1)
        x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
        out = np.empty(len(images), dtype=np.int64)
        for s in range(0, len(x), chunk):
            xb = x[s:s + chunk]
            d2 = a2[None, :] - 2.0 * xb @ flat_a.T
            out[s:s + chunk] = d2.argmin(axis=1) // n_a
        return out

    def predict(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images)
        if len(images) == 0:
            return np.zeros(0, dtype=np.int64)
        marked = self.marker_class(images)
        base = self.base_class(images)
        return np.where(marked >= 0, marked, base)

    __call__ = predict


@dataclass
class SynthWorld:
    spec: SynthSpec
    labeled: Dataset
    unlabeled: Dataset
    test: Dataset
    truth: SynthTruth


def _nuisance(spec: SynthSpec, shapes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-sample shift (up to ``nuisance`` pixels per axis) and gain
    (within ``1 +- nuisance / 5``) of the shape layer."""
    n = len(shapes)
    shift = rng.uniform(-1.0, 1.0, size=(n, 2)) * spec.nuisance
    gain = 1.0 + rng.uniform(-1.0, 1.0, size=n) * spec.nuisance / 5.0
    if spec.nuisance == 0:
        return shapes
    moved = centered_affine(shapes.astype(np.float32), np.broadcast_to(np.eye(2), (n, 2, 2)).copy(), shift)
    return np.clip(moved * gain[:, None, None, None], 0.0, 1.0)


def _draw(spec: SynthSpec, shapes: np.ndarray, per_class: int, split: str) -> Dataset:
    rng = make_rng(spec.seed, "synth", split)
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    images = add_markers(spec, _nuisance(spec, shapes[labels], rng), labels)
    noise = rng.standard_normal(images.shape) * spec.noise
    images = np.clip(images + noise, 0.0, 1.0)
    order = rng.permutation(len(labels))
    return Dataset(images[order].astype(np.float32), labels[order], spec.num_classes)


def gen_synthetic(spec: SynthSpec) -> SynthWorld:
    truth = SynthTruth(spec)
    t = class_templates(spec, with_markers=False)
    return SynthWorld(
        spec,
        _draw(spec, t, spec.labeled_per_class, "labeled"),
        _draw(spec, t, spec.unlabeled_per_class, "unlabeled"),
        _draw(spec, t, spec.test_per_class, "test"),
        truth,
    )
