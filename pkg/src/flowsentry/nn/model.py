"""Sequential model container and its versioned binary serialization."""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..errors import FormatError, ShapeError
from .layers import LayerSpec, build_layer

MODEL_MAGIC = b"FSNN"
MODEL_VERSION = 1


class Model:
    """Stack of layers built from LayerSpecs against a fixed input shape."""

    def __init__(self, arch: list[LayerSpec], input_shape: tuple, seed: int = 0,
                 dtype=np.float32):
        self.arch = list(arch)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.meta: dict = {}
        rng = np.random.default_rng(seed)
        self.layers = []
        shape = self.input_shape
        for spec in self.arch:
            layer, shape = build_layer(spec, shape, rng, self.dtype)
            self.layers.append(layer)
        self.output_shape = shape

    # -- passes ---------------------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected sample shape {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    # -- parameters -------------------------------------------------------------

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def set_params(self, values: list[np.ndarray]) -> None:
        it = iter(values)
        for layer in self.layers:
            if layer.params:
                layer.set_params([next(it) for _ in layer.params])

    def copy(self) -> "Model":
        clone = Model(self.arch, self.input_shape, seed=0, dtype=self.dtype)
        clone.set_params([p.copy() for p in self.params()])
        clone.meta = dict(self.meta)
        return clone

    # -- serialization ------------------------------------------------------------

    def save_bytes(self) -> bytes:
        header = {
            "arch": [s.to_json() for s in self.arch],
            "input_shape": list(self.input_shape),
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))},
        }
        blob = io.BytesIO()
        blob.write(MODEL_MAGIC)
        blob.write(struct.pack("<I", MODEL_VERSION))
        raw = json.dumps(header, sort_keys=True).encode()
        blob.write(struct.pack("<I", len(raw)))
        blob.write(raw)
        params = self.params()
        blob.write(struct.pack("<I", len(params)))
        for p in params:
            arr = np.ascontiguousarray(p, dtype="<f4")
            blob.write(struct.pack("<B", arr.ndim))
            blob.write(struct.pack("<" + "I" * arr.ndim, *arr.shape))
            blob.write(arr.tobytes())
        return blob.getvalue()

    @classmethod
    def load_bytes(cls, data: bytes) -> "Model":
        view = io.BytesIO(data)
        if view.read(4) != MODEL_MAGIC:
            raise FormatError("not a model blob")
        (version,) = struct.unpack("<I", view.read(4))
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        (hlen,) = struct.unpack("<I", view.read(4))
        header = json.loads(view.read(hlen).decode())
        arch = [LayerSpec.from_json(s) for s in header["arch"]]
        model = cls(arch, tuple(header["input_shape"]), seed=0, dtype=np.float32)
        model.meta.update(header.get("meta", {}))
        (n_params,) = struct.unpack("<I", view.read(4))
        values = []
        for _ in range(n_params):
            (ndim,) = struct.unpack("<B", view.read(1))
            shape = struct.unpack("<" + "I" * ndim, view.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(view.read(4 * count), dtype="<f4").reshape(shape)
            values.append(arr.astype(np.float32))
        expected = len(model.params())
        if len(values) != expected:
            raise FormatError(f"blob holds {len(values)} params, arch needs {expected}")
        model.set_params(values)
        return model


def as_nhwc(images: np.ndarray) -> np.ndarray:
    """Promote [n, h, w] grayscale stacks to the NHWC layout models consume."""
    images = np.asarray(images)
    if images.ndim == 3:
        return images[..., None]
    return images
