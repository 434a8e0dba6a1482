"""Dataset ingestion (IDX byte format), corruption generation, and splits."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidSpec

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CORRUPTION_KINDS = ("gaussian_noise", "impulse_noise", "translate", "scale")

# Severity tables, index 0..5. Severity 0 is the identity for every kind.
GAUSSIAN_SIGMA = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5)
IMPULSE_RATE = (0.0, 0.02, 0.05, 0.1, 0.2, 0.4)
TRANSLATE_SHIFT = (0, 1, 2, 3, 4, 5)
SCALE_ZOOM = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)


@dataclass
class Dataset:
    """Image collection with optional class labels, pixels in [0, 1]."""

    images: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 3:
            raise ValueError(f"images must be [n, h, w], got shape {self.images.shape}")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.images):
                raise ValueError("images and labels must have the same length")

    def __len__(self) -> int:
        return len(self.images)

    def take(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices)
        labels = self.labels[idx] if self.labels is not None else None
        return Dataset(self.images[idx], labels, name or self.name)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise InvalidSpec(f"unknown corruption kind {self.kind!r}")
        if not (0 <= int(self.severity) <= 5):
            raise InvalidSpec(f"severity must be in 0..5, got {self.severity}")


# -- IDX format ---------------------------------------------------------------

def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte stream into an image tensor in [0,1] or a label vector.

    Image streams (magic 0x00000803) come back as float32 [n, h, w] scaled
    by 1/255; label streams (magic 0x00000801) as int64 [n].
    """
    if len(data) < 4:
        raise FormatError(f"truncated IDX header at byte {len(data)}")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise FormatError(f"bad IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise FormatError(f"truncated IDX dimensions at byte {len(data)}")
    dims = struct.unpack(">" + "I" * ndim, data[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(data) < expected:
        raise FormatError(f"truncated IDX payload at byte {len(data)}, expected {expected}")
    payload = np.frombuffer(data[header_len:expected], dtype=np.uint8).reshape(dims)
    if magic == IDX_IMAGES_MAGIC:
        return payload.astype(np.float32) / 255.0
    return payload.astype(np.int64)


def serialize_idx(values: np.ndarray) -> bytes:
    """Inverse of parse_idx; parse → serialize is bit-exact."""
    values = np.asarray(values)
    if values.ndim == 3:
        magic = IDX_IMAGES_MAGIC
        payload = np.rint(values * 255.0).astype(np.uint8)
    elif values.ndim == 1:
        magic = IDX_LABELS_MAGIC
        payload = values.astype(np.uint8)
    else:
        raise FormatError(f"cannot serialize array of rank {values.ndim}")
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * values.ndim, *values.shape)
    return header + payload.tobytes()


def load_idx(path: str | Path) -> np.ndarray:
    return parse_idx(Path(path).read_bytes())


def save_idx(values: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(serialize_idx(values))


def load_dataset(images_path: str | Path, labels_path: str | Path | None = None,
                 name: str | None = None) -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path) if labels_path else None
    return Dataset(images, labels, name or Path(images_path).stem)


# -- corruption generator -----------------------------------------------------

def corrupt(dataset: Dataset, spec: CorruptionSpec) -> Dataset:
    """Apply one corruption kind at the given severity, deterministic per seed.

    Labels and shape are preserved; pixels stay clamped to [0, 1].
    """
    severity = int(spec.severity)
    out_name = f"{dataset.name}-{spec.kind}-s{severity}"
    if severity == 0:
        return replace(dataset, images=dataset.images.copy(), name=out_name)

    rng = np.random.default_rng(spec.seed)
    x = dataset.images
    if spec.kind == "gaussian_noise":
        sigma = GAUSSIAN_SIGMA[severity]
        noisy = x + rng.normal(0.0, sigma, size=x.shape)
        images = np.clip(noisy, 0.0, 1.0).astype(np.float32)
    elif spec.kind == "impulse_noise":
        rate = IMPULSE_RATE[severity]
        flip = rng.random(x.shape) < rate
        salt = (rng.random(x.shape) < 0.5).astype(np.float32)
        images = np.where(flip, salt, x).astype(np.float32)
    elif spec.kind == "translate":
        shift = TRANSLATE_SHIFT[severity]
        images = np.zeros_like(x)
        if shift < x.shape[2]:
            images[:, :, shift:] = x[:, :, : x.shape[2] - shift]
    else:  # scale
        zoom = SCALE_ZOOM[severity]
        images = _zoom_center(x, zoom)
    return replace(dataset, images=images, name=out_name)


def _zoom_center(x: np.ndarray, zoom: float) -> np.ndarray:
    """Nearest-neighbor zoom about the image center; out-of-range reads pad 0."""
    n, h, w = x.shape
    ci, cj = (h - 1) / 2.0, (w - 1) / 2.0
    rows = np.rint((np.arange(h) - ci) / zoom + ci).astype(int)
    cols = np.rint((np.arange(w) - cj) / zoom + cj).astype(int)
    valid_r = (rows >= 0) & (rows < h)
    valid_c = (cols >= 0) & (cols < w)
    out = np.zeros_like(x)
    rr = rows.clip(0, h - 1)
    cc = cols.clip(0, w - 1)
    out[:] = x[:, rr][:, :, cc]
    out[:, ~valid_r, :] = 0.0
    out[:, :, ~valid_c] = 0.0
    return out.astype(np.float32)


# -- splits ---------------------------------------------------------------------

def split(dataset: Dataset, train_n: int, test_n: int, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint train/test split; class-stratified when labels are present."""
    n = len(dataset)
    if train_n + test_n > n:
        raise InvalidSpec(f"requested {train_n}+{test_n} samples from dataset of {n}")
    rng = np.random.default_rng(seed)
    if dataset.labels is None:
        order = rng.permutation(n)
        return (
            dataset.take(order[:train_n], f"{dataset.name}-train"),
            dataset.take(order[train_n : train_n + test_n], f"{dataset.name}-test"),
        )

    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    classes = np.unique(dataset.labels)
    train_alloc = _proportional_allocation(dataset.labels, classes, train_n)
    for cls, want_train in zip(classes, train_alloc):
        members = np.flatnonzero(dataset.labels == cls)
        members = members[rng.permutation(len(members))]
        train_idx.append(members[:want_train])
        test_idx.append(members[want_train:])
    train = np.concatenate(train_idx)
    leftovers = np.concatenate(test_idx)
    # stratify the test side over what remains
    rest_labels = dataset.labels[leftovers]
    test_alloc = _proportional_allocation(rest_labels, classes, test_n)
    picked = []
    for cls, want in zip(classes, test_alloc):
        members = leftovers[rest_labels == cls]
        picked.append(members[:want])
    test = np.concatenate(picked)
    train = train[rng.permutation(len(train))]
    test = test[rng.permutation(len(test))]
    return (
        dataset.take(train, f"{dataset.name}-train"),
        dataset.take(test, f"{dataset.name}-test"),
    )


def _proportional_allocation(labels: np.ndarray, classes: np.ndarray, total: int) -> list[int]:
    """Largest-remainder apportionment of `total` slots across class counts."""
    counts = np.array([(labels == c).sum() for c in classes], dtype=float)
    if counts.sum() < total:
        raise InvalidSpec("not enough samples to allocate")
    exact = counts / counts.sum() * total
    base = np.floor(exact).astype(int)
    base = np.minimum(base, counts.astype(int))
    remainder = total - base.sum()
    order = np.argsort(-(exact - base))
    for k in order:
        if remainder == 0:
            break
        if base[k] < counts[k]:
            base[k] += 1
            remainder -= 1
    if remainder:
        for k in range(len(base)):
            room = int(counts[k]) - base[k]
            grab = min(room, remainder)
            base[k] += grab
            remainder -= grab
            if remainder == 0:
                break
    return [int(b) for b in base]
