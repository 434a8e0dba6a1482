"""Reconstruction and classification losses with their input gradients."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError

EPS = 1e-7


def _check_pair(x, r):
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {r.shape}")
    if np.isnan(r).any() or np.isnan(x).any():
        raise DomainError("NaN in reconstruction loss inputs")
    return x, r


def _batched(x):
    # rank-0/1 inputs are a single sample; otherwise axis 0 is the batch
    if x.ndim <= 1:
        return x.reshape(1, -1)
    return x.reshape(x.shape[0], -1)


def bce_loss(x: np.ndarray, r: np.ndarray) -> float:
    """Binary cross-entropy, summed over dimensions, averaged over the batch.

    Reconstructions are clamped to [EPS, 1-EPS] before the logs.
    """
    x, r = _check_pair(x, r)
    rc = np.clip(r, EPS, 1.0 - EPS)
    xb, rb = _batched(x), _batched(rc)
    per_sample = -(xb * np.log(rb) + (1.0 - xb) * np.log(1.0 - rb)).sum(axis=1)
    return float(per_sample.mean())


def bce_per_sample(x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Per-sample summed BCE, no batch averaging."""
    x, r = _check_pair(x, r)
    rc = np.clip(r, EPS, 1.0 - EPS)
    xb, rb = _batched(x), _batched(rc)
    return -(xb * np.log(rb) + (1.0 - xb) * np.log(1.0 - rb)).sum(axis=1)


def bce_grad(x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """d(bce_loss)/dr. Zero where the clamp is active, matching the loss."""
    x, r = _check_pair(x, r)
    inside = (r > EPS) & (r < 1.0 - EPS)
    rc = np.clip(r, EPS, 1.0 - EPS)
    n = x.shape[0] if x.ndim > 1 else 1
    g = (rc - x) / (rc * (1.0 - rc)) / n
    return np.where(inside, g, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_ce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    p = softmax(np.asarray(logits, dtype=np.float64))
    picked = p[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, 1e-12)).mean())


def softmax_ce_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = softmax(np.asarray(logits, dtype=np.float64))
    p[np.arange(len(labels)), labels] -= 1.0
    return p / len(labels)
