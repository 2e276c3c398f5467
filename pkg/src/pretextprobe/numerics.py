"""Small deterministic numeric kernels, seeded RNG streams and statistics.

Tensors are plain numpy arrays of float32. Reductions accumulate in float64.
All randomness goes through :func:`make_rng`, which wraps numpy's Philox
counter-based generator with hierarchical seed derivation, so a stream is a
pure function of ``(seed, *keys)``.
"""

from __future__ import annotations

import hashlib

import numpy as np

from pretextprobe.errors import DegenerateError, DimensionError

FLOAT = np.float32


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("rng keys must be non-negative")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return an independent Philox stream for ``seed`` split by ``keys``.

    ``make_rng(7, "task", 3)`` is always the same stream, and differs from
    ``make_rng(7, "task", 4)``. String keys are hashed with BLAKE2b.
    """
    ss = np.random.SeedSequence(entropy=_key_to_int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit child seed; used where a plain integer has to cross an API."""
    ss = np.random.SeedSequence(entropy=_key_to_int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of 2-D arrays, accumulated in float64, returned as float32."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = a.astype(np.float64) @ b.astype(np.float64)
    return out.astype(FLOAT)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction. Keeps the input dtype (float32 by default)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    if np.asarray(logits).dtype == np.float64:
        return p
    return p.astype(FLOAT)


def pearson_r(xs, ys) -> float:
    """Sample Pearson correlation of two equal-length vectors."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DimensionError("pearson_r needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateError("pearson_r is undefined for a constant vector")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))
