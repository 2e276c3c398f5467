"""Augmentation families, their strength grids, and augmented views.

Every view consumes exactly ``N_UNIFORMS`` uniform draws from the caller's
generator, whatever the family, so draw order never depends on the task.
Geometric families use inverse-mapped bilinear sampling with zero padding;
all outputs are clamped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from pretextprobe.errors import TaskError

N_UNIFORMS = 4
LUMA = np.array([0.299, 0.587, 0.114])

# Row order and strength ranges of the benchmark table.
FAMILIES: dict[str, tuple[int, int]] = {
    "RandomResizedCrop": (0, 10),
    "RandomRotation": (0, 10),
    "Translate": (0, 10),
    "Shear": (0, 10),
    "Scale": (1, 10),
    "Brightness": (0, 10),
    "Contrast": (0, 10),
    "Saturation": (0, 10),
    "Hue": (0, 5),
    "RandomHorizontalFlip": (0, 10),
    "RandomVerticalFlip": (0, 10),
}
GEOMETRIC = ("RandomResizedCrop", "RandomRotation", "Translate", "Shear", "Scale")
PHOTOMETRIC = ("Brightness", "Contrast", "Saturation", "Hue")
FLIPS = ("RandomHorizontalFlip", "RandomVerticalFlip")


@dataclass(frozen=True, order=True)
class PretextTask:
    family: str
    strength: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise TaskError(f"unknown augmentation family {self.family!r}")
        lo, hi = FAMILIES[self.family]
        if isinstance(self.strength, bool) or int(self.strength) != self.strength:
            raise TaskError(f"strength must be an integer, got {self.strength!r}")
        if not lo <= self.strength <= hi:
            raise TaskError(f"{self.family} strength {self.strength} outside [{lo}, {hi}]")
        object.__setattr__(self, "strength", int(self.strength))

    @property
    def name(self) -> str:
        return f"{self.family}:{self.strength}"

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> "PretextTask":
        family, sep, strength = text.strip().partition(":")
        if not sep:
            raise TaskError(f"task {text!r} is not of the form Family:strength")
        try:
            s = int(strength)
        except ValueError:
            raise TaskError(f"task {text!r} has a non-integer strength") from None
        return cls(family, s)

    @property
    def is_identity(self) -> bool:
        """True when every draw of this task leaves the image unchanged."""
        if self.family == "Scale":
            return self.strength == 10
        return self.strength == 0


def task_grid() -> list[PretextTask]:
    return [PretextTask(f, s) for f, (lo, hi) in FAMILIES.items() for s in range(lo, hi + 1)]


def parse_tasks(spec) -> list[PretextTask]:
    """``"all"``, a comma-separated string, or a list of task names."""
    if spec is None or spec == "all":
        return task_grid()
    if isinstance(spec, str):
        spec = [s for s in spec.split(",") if s.strip()]
    tasks = [t if isinstance(t, PretextTask) else PretextTask.parse(t) for t in spec]
    if len(set(tasks)) != len(tasks):
        raise TaskError("duplicate tasks in task list")
    return tasks


# --------------------------------------------------------------------------
# deterministic primitives


def hflip(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(images[..., ::-1])


def vflip(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(images[..., ::-1, :])


def _snap(m: np.ndarray) -> np.ndarray:
    r = np.round(m)
    return np.where(np.abs(m - r) < 1e-12, r, m)


def bilinear_sample(images: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``images`` (N, C, H, W) at source coordinates ``xs``/``ys`` (N, H, W).

    Pixels outside the image read as zero.
    """
    n, c, h, w = images.shape
    padded = np.pad(images.astype(np.float64), ((0, 0), (0, 0), (1, 1), (1, 1)))
    padded = padded.transpose(0, 2, 3, 1)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = (xs - x0)[..., None]
    wy = (ys - y0)[..., None]
    ix0 = np.clip(x0 + 1, 0, w + 1).astype(np.intp)
    ix1 = np.clip(x0 + 2, 0, w + 1).astype(np.intp)
    iy0 = np.clip(y0 + 1, 0, h + 1).astype(np.intp)
    iy1 = np.clip(y0 + 2, 0, h + 1).astype(np.intp)
    nn = np.arange(n)[:, None, None]
    out = (
        padded[nn, iy0, ix0] * (1 - wx) * (1 - wy)
        + padded[nn, iy0, ix1] * wx * (1 - wy)
        + padded[nn, iy1, ix0] * (1 - wx) * wy
        + padded[nn, iy1, ix1] * wx * wy
    )
    return out.transpose(0, 3, 1, 2)


def warp_affine(images: np.ndarray, inv_linear: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Inverse-map warp: output pixel p reads source ``inv_linear @ p + offset``.

    ``inv_linear`` is (N, 2, 2) and ``offset`` (N, 2), both in (x, y) pixel units.
    """
    n, _, h, w = images.shape
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    a = inv_linear
    xs = a[:, 0, 0, None, None] * gx + a[:, 0, 1, None, None] * gy + offset[:, 0, None, None]
    ys = a[:, 1, 0, None, None] * gx + a[:, 1, 1, None, None] * gy + offset[:, 1, None, None]
    out = bilinear_sample(images, xs, ys)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def centered_affine(images: np.ndarray, linear: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Apply forward maps ``p -> linear @ (p - c) + c + shift`` about the image centre."""
    _, _, h, w = images.shape
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    inv = _snap(np.linalg.inv(linear))
    offset = center - np.einsum("nij,nj->ni", inv, center + shift)
    return warp_affine(images, inv, offset)


def rotate(images: np.ndarray, degrees) -> np.ndarray:
    """Rotate (N, C, H, W) images counter-clockwise (in x-right, y-down pixel axes)."""
    theta = np.deg2rad(np.broadcast_to(np.asarray(degrees, dtype=np.float64), (images.shape[0],)))
    c, s = np.cos(theta), np.sin(theta)
    lin = _snap(np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2))
    return centered_affine(images, lin, np.zeros((images.shape[0], 2)))


def crop_resize(images: np.ndarray, side: np.ndarray, ox: np.ndarray, oy: np.ndarray) -> np.ndarray:
    """Crop a square window (``side`` as a fraction of each axis, top-left at
    ``ox``/``oy`` pixels) and resize it back to full size."""
    n = images.shape[0]
    inv = np.zeros((n, 2, 2))
    inv[:, 0, 0] = side
    inv[:, 1, 1] = side
    offset = np.stack([ox + 0.5 * side - 0.5, oy + 0.5 * side - 0.5], -1)
    return warp_affine(images, inv, offset)


def luma(images: np.ndarray) -> np.ndarray:
    return np.einsum("nchw,c->nhw", images.astype(np.float64), LUMA)


def _finish(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0).astype(np.float32)


def adjust_brightness(images, factor):
    f = np.asarray(factor, dtype=np.float64).reshape(-1, 1, 1, 1)
    return _finish(images.astype(np.float64) * f)


def adjust_contrast(images, factor):
    f = np.asarray(factor, dtype=np.float64).reshape(-1, 1, 1, 1)
    mean = luma(images).mean(axis=(1, 2)).reshape(-1, 1, 1, 1)
    return _finish(f * images + (1 - f) * mean)


def adjust_saturation(images, factor):
    f = np.asarray(factor, dtype=np.float64).reshape(-1, 1, 1, 1)
    gray = luma(images)[:, None]
    return _finish(f * images + (1 - f) * gray)


def adjust_hue(images, offset):
    off = np.asarray(offset, dtype=np.float64).reshape(-1, 1, 1)
    hsv = rgb_to_hsv(np.moveaxis(images.astype(np.float64), 1, -1))
    hsv[..., 0] = np.mod(hsv[..., 0] + off, 1.0)
    return _finish(np.moveaxis(hsv_to_rgb(hsv), -1, 1))


# --------------------------------------------------------------------------
# random application


def _sym(u, half_width):
    return (2.0 * u - 1.0) * half_width


def transform_params(task: PretextTask, u: np.ndarray) -> dict[str, np.ndarray]:
    """Map uniforms ``u`` (N, N_UNIFORMS) to the family's physical parameters."""
    s = task.strength / 10.0
    fam = task.family
    if fam == "RandomResizedCrop":
        area = 1.0 - s * u[:, 0]
        return {"area": area, "pos_x": u[:, 1], "pos_y": u[:, 2]}
    if fam == "RandomRotation":
        return {"degrees": _sym(u[:, 0], 180.0 * s)}
    if fam == "Translate":
        return {"dx": _sym(u[:, 0], s), "dy": _sym(u[:, 1], s)}
    if fam == "Shear":
        lim = np.arctan(s)
        return {"shear_x": _sym(u[:, 0], lim), "shear_y": _sym(u[:, 1], lim)}
    if fam == "Scale":
        lo, hi = s, max(s, 2.0 - s)
        return {"factor": lo + (hi - lo) * u[:, 0]}
    if fam in ("Brightness", "Contrast", "Saturation"):
        lo, hi = max(0.0, 1.0 - s), 1.0 + s
        return {"factor": lo + (hi - lo) * u[:, 0]}
    if fam == "Hue":
        return {"offset": _sym(u[:, 0], s)}
    return {"flip": u[:, 0] < s}


def _changed(task: PretextTask, p: dict[str, np.ndarray]) -> np.ndarray:
    fam = task.family
    if fam == "RandomResizedCrop":
        return p["area"] != 1.0
    if fam == "RandomRotation":
        return p["degrees"] != 0.0
    if fam == "Translate":
        return (p["dx"] != 0.0) | (p["dy"] != 0.0)
    if fam == "Shear":
        return (p["shear_x"] != 0.0) | (p["shear_y"] != 0.0)
    if fam in ("Scale", "Brightness", "Contrast", "Saturation"):
        return p["factor"] != 1.0
    if fam == "Hue":
        return p["offset"] != 0.0
    return p["flip"]


def apply_params(images: np.ndarray, task: PretextTask, p: dict[str, np.ndarray]) -> np.ndarray:
    """Apply explicit per-image parameters (as from :func:`transform_params`)."""
    images = np.asarray(images, dtype=np.float32)
    out = images.copy()
    mask = np.asarray(_changed(task, p), dtype=bool)
    if not mask.any():
        return out
    x = images[mask]
    q = {k: np.asarray(v)[mask] for k, v in p.items()}
    n, _, h, w = x.shape
    fam = task.family
    if fam == "RandomResizedCrop":
        side = np.maximum(np.sqrt(q["area"]), 1.0 / min(h, w))
        y = crop_resize(x, side, q["pos_x"] * w * (1 - side), q["pos_y"] * h * (1 - side))
    elif fam == "RandomRotation":
        y = rotate(x, q["degrees"])
    elif fam == "Translate":
        shift = np.stack([q["dx"] * w, q["dy"] * h], -1)
        y = centered_affine(x, np.broadcast_to(np.eye(2), (n, 2, 2)).copy(), shift)
    elif fam == "Shear":
        lin = np.zeros((n, 2, 2))
        lin[:, 0, 0] = lin[:, 1, 1] = 1.0
        lin[:, 0, 1] = np.tan(q["shear_x"])
        lin[:, 1, 0] = np.tan(q["shear_y"])
        y = centered_affine(x, lin, np.zeros((n, 2)))
    elif fam == "Scale":
        lin = q["factor"][:, None, None] * np.eye(2)
        y = centered_affine(x, lin, np.zeros((n, 2)))
    elif fam == "Brightness":
        y = adjust_brightness(x, q["factor"])
    elif fam == "Contrast":
        y = adjust_contrast(x, q["factor"])
    elif fam == "Saturation":
        y = adjust_saturation(x, q["factor"])
    elif fam == "Hue":
        y = adjust_hue(x, q["offset"])
    elif fam == "RandomHorizontalFlip":
        y = hflip(x)
    else:
        y = vflip(x)
    out[mask] = y
    return out


def apply_uniforms(images: np.ndarray, task: PretextTask, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64).reshape(len(images), N_UNIFORMS)
    if task.is_identity:
        return np.array(images, dtype=np.float32, copy=True)
    return apply_params(images, task, transform_params(task, u))


def apply_transform(img: np.ndarray, task: PretextTask, rng: np.random.Generator) -> np.ndarray:
    """One random application of ``task`` to a single (C, H, W) image."""
    u = rng.random((1, N_UNIFORMS))
    return apply_uniforms(np.asarray(img)[None], task, u)[0]


def sample_view_pair(img: np.ndarray, task: PretextTask, rng: np.random.Generator):
    """Two independent views of one image; the first view draws first."""
    u = rng.random((2, N_UNIFORMS))
    views = apply_uniforms(np.stack([img, img]), task, u)
    return views[0], views[1]


def view_pairs(images: np.ndarray, task: PretextTask, rng: np.random.Generator):
    """Views for a batch, image by image in order, matching repeated
    :func:`sample_view_pair` calls on the same stream."""
    n = len(images)
    u = rng.random((n, 2, N_UNIFORMS))
    both = np.repeat(np.asarray(images, dtype=np.float32), 2, axis=0)
    views = apply_uniforms(both, task, u.reshape(2 * n, N_UNIFORMS)).reshape((n, 2) + images.shape[1:])
    return views[:, 0], views[:, 1]
