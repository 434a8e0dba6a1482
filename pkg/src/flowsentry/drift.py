"""Reconstruction-error drift checking and critical point selection.

An autoencoder fitted to the training set defines "normal"; test samples whose
per-sample reconstruction loss escapes a train-loss quantile band are flagged.
The band starts at (0.20, 0.80) and widens up to max_trials times until enough
samples are flagged. Flagged samples are then ranked by a kernel density
estimate over their scalar losses, densest first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCriticalSet, EmptyInput, InvalidBandwidth
from .nn import LayerSpec, Model, TrainConfig, autoencoder_arch, reconstruction_losses, train_autoencoder

GAUSS_NORM = 1.0 / np.sqrt(2.0 * np.pi)


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile at sorted position (n-1)*q."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("quantile of empty vector")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    s = np.sort(values)
    pos = (len(s) - 1) * q
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    return float(s[lo] + frac * (s[hi] - s[lo]))


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule over a 1-d sample; tiny positive floor for degenerate data."""
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    if len(values) > 1:
        iqr = quantile(values, 0.75) - quantile(values, 0.25)
        spread = min(std, iqr / 1.34) if iqr > 0 else std
    else:
        spread = std
    h = 0.9 * spread * len(values) ** (-0.2)
    if not h > 0:
        h = 1e-9
    return float(h)


class KernelDensity:
    """Gaussian KDE over scalar samples: f(x) = (1/nh) sum K((x - x_i)/h)."""

    def __init__(self, points, h: float | None = None, kernel: str = "gaussian"):
        self.points = np.asarray(points, dtype=np.float64).ravel()
        if self.points.size == 0:
            raise EmptyInput("KDE needs at least one sample")
        if kernel != "gaussian":
            raise ValueError(f"unsupported kernel {kernel!r}")
        if h is None:
            h = silverman_bandwidth(self.points)
        if not h > 0:
            raise InvalidBandwidth(f"bandwidth must be positive, got {h}")
        self.h = float(h)

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=np.float64)
        u = (x[..., None] - self.points) / self.h
        dens = (GAUSS_NORM * np.exp(-0.5 * u * u)).sum(axis=-1) / (len(self.points) * self.h)
        return float(dens) if dens.ndim == 0 else dens


def kde(points, h: float | None = None, kernel: str = "gaussian") -> KernelDensity:
    return KernelDensity(points, h, kernel)


@dataclass(frozen=True)
class SelectorConfig:
    n_critical: int = 10
    initial_quantile_high: float = 0.80
    width: float = 0.1
    max_trials: int = 3
    kde_bandwidth: float | None = None
    kde_kernel: str = "gaussian"
    stochastic: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_critical < 1:
            raise ValueError("n_critical must be >= 1")
        if not 0.5 < self.initial_quantile_high < 1.0:
            raise ValueError("initial_quantile_high must lie in (0.5, 1)")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")

    @property
    def initial_quantile_low(self) -> float:
        return 1.0 - self.initial_quantile_high


@dataclass(frozen=True)
class TrialRecord:
    quantile_high: float
    threshold_low: float
    threshold_high: float
    flagged: int


@dataclass
class CriticalReport:
    indices: np.ndarray            # positions into X_test, density-rank order
    losses: np.ndarray             # reconstruction losses of the selected points
    densities: np.ndarray          # KDE scores of the selected points
    thresholds: tuple[float, float]
    flagged_indices: np.ndarray    # every index outside the final band
    trials: list[TrialRecord] = field(default_factory=list)
    samples: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.indices)

    def to_json(self) -> dict:
        return {
            "indices": [int(i) for i in self.indices],
            "losses": [float(v) for v in self.losses],
            "densities": [float(v) for v in self.densities],
            "thresholds": [float(self.thresholds[0]), float(self.thresholds[1])],
            "flagged": [int(i) for i in self.flagged_indices],
            "trials": [
                {
                    "quantile_high": t.quantile_high,
                    "threshold_low": t.threshold_low,
                    "threshold_high": t.threshold_high,
                    "flagged": t.flagged,
                }
                for t in self.trials
            ],
        }


def select_critical(train_losses, test_losses, cfg: SelectorConfig) -> CriticalReport:
    """Band-widen-and-rank selection over explicit loss vectors."""
    train_losses = np.asarray(train_losses, dtype=np.float64).ravel()
    test_losses = np.asarray(test_losses, dtype=np.float64).ravel()
    if train_losses.size == 0 or test_losses.size == 0:
        raise EmptyInput("selector needs nonempty train and test losses")

    q_high = cfg.initial_quantile_high
    trials: list[TrialRecord] = []
    mask = np.zeros(len(test_losses), dtype=bool)
    thr_low = thr_high = 0.0
    for _ in range(cfg.max_trials):
        q_low = 1.0 - q_high
        thr_high = quantile(train_losses, q_high)
        thr_low = quantile(train_losses, q_low)
        mask = (test_losses > thr_high) | (test_losses < thr_low)
        trials.append(TrialRecord(q_high, thr_low, thr_high, int(mask.sum())))
        if mask.sum() >= cfg.n_critical:
            break
        q_high = q_high - cfg.width

    flagged = np.flatnonzero(mask)
    if flagged.size == 0:
        raise EmptyCriticalSet(
            f"no test losses escaped the band after {len(trials)} trials "
            f"(final thresholds {thr_low:.6g}..{thr_high:.6g})"
        )

    flagged_losses = test_losses[flagged]
    density = kde(flagged_losses, cfg.kde_bandwidth, cfg.kde_kernel)
    scores = np.atleast_1d(density(flagged_losses))

    if cfg.stochastic:
        rng = np.random.default_rng(cfg.seed)
        take = min(cfg.n_critical, flagged.size)
        weights = scores / scores.sum()
        chosen = rng.choice(flagged.size, size=take, replace=False, p=weights)
        order = chosen[np.argsort(-scores[chosen], kind="stable")]
    else:
        # densest first; ties broken by higher loss, then lower test index
        ranking = sorted(
            range(flagged.size),
            key=lambda k: (-scores[k], -flagged_losses[k], flagged[k]),
        )
        order = np.asarray(ranking[: cfg.n_critical], dtype=int)

    return CriticalReport(
        indices=flagged[order],
        losses=flagged_losses[order],
        densities=scores[order],
        thresholds=(float(thr_low), float(thr_high)),
        flagged_indices=flagged,
        trials=trials,
    )


def critical_point_selector(autoencoder: Model, x_train, x_test,
                            cfg: SelectorConfig) -> CriticalReport:
    """Flag and rank test points whose reconstruction loss escapes the train band."""
    test_images = _image_array(x_test)
    if len(test_images) == 0:
        raise EmptyInput("X_test is empty")
    train_losses = reconstruction_losses(autoencoder, _image_array(x_train))
    test_losses = reconstruction_losses(autoencoder, test_images)
    report = select_critical(train_losses, test_losses, cfg)
    report.samples = test_images[report.indices]
    return report


def preprocess(images) -> np.ndarray:
    """Normalize raw inputs to float32 [n, h, w] in [0, 1]."""
    arr = np.asarray(_image_array(images), dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, ...]
    if arr.size and arr.max() > 1.0:
        arr = arr / 255.0
    return np.clip(arr, 0.0, 1.0)


def _image_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "images", x))


def _fingerprint(train_images: np.ndarray, arch: list[LayerSpec], cfg: TrainConfig) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(train_images, dtype=np.float32).tobytes())
    digest.update(json.dumps([s.to_json() for s in arch]).encode())
    digest.update(f"{cfg.epochs}|{cfg.batch_size}|{cfg.lr}|{cfg.seed}".encode())
    return digest.hexdigest()


def fit_or_load_autoencoder(x_train, arch: list[LayerSpec] | None = None,
                            train_cfg: TrainConfig | None = None,
                            cache_dir: str | Path | None = None,
                            force_retrain: bool = False) -> Model:
    """Train the detector AE, reusing a cached fit for identical inputs."""
    arch = arch or autoencoder_arch("compact28")
    train_cfg = train_cfg or TrainConfig(epochs=6, batch_size=64, lr=0.001, seed=0)
    train_images = preprocess(x_train)
    cache_path = None
    if cache_dir is not None:
        key = _fingerprint(train_images, arch, train_cfg)
        cache_path = Path(cache_dir) / f"ae-{key}.bin"
        if cache_path.exists() and not force_retrain:
            return Model.load_bytes(cache_path.read_bytes())
    model = train_autoencoder(train_images, arch, train_cfg)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_bytes(model.save_bytes())
    return model


def drift_detector_checker(x_train, x_test, cfg: SelectorConfig,
                           arch: list[LayerSpec] | None = None,
                           train_cfg: TrainConfig | None = None,
                           tracker=None, run_id: str | None = None,
                           node_id: str = "drift-checker",
                           cache_dir: str | Path | None = None,
                           force_retrain: bool = False) -> CriticalReport:
    """Full checker node: fit AE on the training data, select critical test points."""
    test_images = preprocess(x_test)
    if len(test_images) == 0:
        raise EmptyInput("X_test is empty")
    model = fit_or_load_autoencoder(x_train, arch, train_cfg, cache_dir, force_retrain)
    report = critical_point_selector(model, preprocess(x_train), test_images, cfg)
    if tracker is not None and run_id:
        tracker.save_metadata(
            [
                {"node_id": node_id, "key": "drift/flagged", "kind": "metric",
                 "value": float(len(report.flagged_indices))},
                {"node_id": node_id, "key": "drift/selected", "kind": "metric",
                 "value": float(len(report))},
                {"node_id": node_id, "key": "drift/threshold_low", "kind": "metric",
                 "value": report.thresholds[0]},
                {"node_id": node_id, "key": "drift/threshold_high", "kind": "metric",
                 "value": report.thresholds[1]},
                {"node_id": node_id, "key": "drift/report", "kind": "tag",
                 "value": json.dumps(report.to_json())},
            ],
            run_id,
        )
    return report
