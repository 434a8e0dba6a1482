"""Trainers: plain-SGD autoencoder, denoising autoencoder, and CNN classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, InvalidLabel, PairingError, TrainingDiverged
from .layers import LayerSpec
from .losses import bce_grad, bce_loss, bce_per_sample, softmax_ce_grad, softmax_ce_loss
from .model import Model, as_nhwc

N_CLASSES = 10


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    lr: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
    """Elementwise update: theta <- theta - lr * g."""
    return [p - lr * g for p, g in zip(params, grads, strict=True)]


def _as_images(x) -> np.ndarray:
    images = getattr(x, "images", x)
    return as_nhwc(np.asarray(images))


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _ae_epoch(model: Model, inputs, targets, cfg_lr, batch_size, rng) -> float:
    total = 0.0
    for batch in _epoch_batches(len(inputs), batch_size, rng):
        xb, tb = inputs[batch], targets[batch]
        r = model.forward(xb)
        loss = bce_loss(tb, r)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"reconstruction loss became {loss}")
        total += loss * len(batch)
        model.backward(bce_grad(tb, r))
        model.set_params(sgd_step(model.params(), model.grads(), cfg_lr))
    return total / len(inputs)


def train_autoencoder(x, arch: list[LayerSpec], cfg: TrainConfig, dtype=np.float32) -> Model:
    """Fit a reconstruction autoencoder with plain SGD on the summed BCE loss."""
    images = _as_images(x)
    if len(images) == 0:
        raise InvalidConfig("training set is empty")
    model = Model(arch, images.shape[1:], seed=cfg.seed, dtype=dtype)
    rng = np.random.default_rng(cfg.seed)
    history = [bce_loss(images, model.forward(images))]
    for _ in range(cfg.epochs):
        history.append(_ae_epoch(model, images, images, cfg.lr, cfg.batch_size, rng))
    model.meta["initial_loss"] = history[0]
    model.meta["final_loss"] = history[-1]
    model.meta["lr"] = cfg.lr
    model.meta["loss_history"] = history
    return model


def train_denoiser(x_clean, x_corrupted, arch: list[LayerSpec], cfg: TrainConfig,
                   dtype=np.float32) -> Model:
    """Fit an autoencoder that reconstructs clean targets from corrupted inputs."""
    clean = _as_images(x_clean)
    corrupted = _as_images(x_corrupted)
    if len(clean) != len(corrupted):
        raise PairingError(f"{len(clean)} clean vs {len(corrupted)} corrupted samples")
    if len(clean) == 0:
        raise InvalidConfig("training set is empty")
    model = Model(arch, corrupted.shape[1:], seed=cfg.seed, dtype=dtype)
    rng = np.random.default_rng(cfg.seed)
    history = [bce_loss(clean, model.forward(corrupted))]
    for _ in range(cfg.epochs):
        history.append(_ae_epoch(model, corrupted, clean, cfg.lr, cfg.batch_size, rng))
    model.meta["initial_loss"] = history[0]
    model.meta["final_loss"] = history[-1]
    model.meta["loss_history"] = history
    return model


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidLabel(f"labels must lie in 0..{N_CLASSES - 1}")
    return y.astype(np.int64)


def train_classifier(x, y, arch: list[LayerSpec], cfg: TrainConfig, dtype=np.float32) -> Model:
    """Softmax cross-entropy training of a CNN classifier emitting logits."""
    images = _as_images(x)
    labels = _check_labels(y)
    model = Model(arch, images.shape[1:], seed=cfg.seed, dtype=dtype)
    rng = np.random.default_rng(cfg.seed)
    fit_classifier(model, images, labels, cfg.epochs, cfg.lr, cfg.batch_size, rng)
    model.meta["lr"] = cfg.lr
    return model


def fit_classifier(model: Model, images, labels, epochs: int, lr: float,
                   batch_size: int, rng) -> None:
    """Run SGD epochs in place; epochs=0 leaves the model untouched (warm no-op)."""
    for _ in range(epochs):
        for batch in _epoch_batches(len(images), batch_size, rng):
            logits = model.forward(images[batch])
            loss = softmax_ce_loss(logits, labels[batch])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"classifier loss became {loss}")
            model.backward(softmax_ce_grad(logits, labels[batch]))
            model.set_params(sgd_step(model.params(), model.grads(), lr))


def retrain_classifier(model: Model, x, y, epochs: int, lr: float,
                       batch_size: int = 32, seed: int = 0) -> Model:
    """Warm-start copy of `model` trained further on (x, y)."""
    images = _as_images(x)
    labels = _check_labels(y)
    clone = model.copy()
    fit_classifier(clone, images, labels, epochs, lr, batch_size, np.random.default_rng(seed))
    return clone


def predict(model, x) -> np.ndarray:
    return np.asarray(forward_logits(model, x)).argmax(axis=1)


def forward_logits(model, x, chunk: int = 512) -> np.ndarray:
    images = _as_images(x)
    outs = [model.forward(images[i : i + chunk]) for i in range(0, len(images), chunk)]
    return np.concatenate(outs) if outs else np.zeros((0,))


def evaluate(model, x, y) -> float:
    labels = _check_labels(y)
    if len(labels) == 0:
        raise InvalidConfig("cannot evaluate on an empty set")
    return float((predict(model, x) == labels).mean())


def reconstruction_losses(model: Model, x, chunk: int = 256) -> np.ndarray:
    """Per-sample summed BCE between inputs and their reconstructions."""
    images = _as_images(x)
    losses = []
    for i in range(0, len(images), chunk):
        xb = images[i : i + chunk]
        losses.append(bce_per_sample(xb, model.forward(xb)))
    return np.concatenate(losses) if losses else np.zeros(0)
