"""Layer kinds with hand-written forward/backward passes on numpy arrays.

Feature maps are NHWC; convolution kernels are [kh, kw, cin, cout] with
stride 1 and zero padding that preserves spatial dims ("same").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

LAYER_KINDS = ("dense", "conv2d", "maxpool2", "upsample2", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int | None = None
    kernel: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and not self.units:
            raise ValueError("dense layer needs units")
        if self.kind == "conv2d" and (self.kernel is None or len(self.kernel) != 4):
            raise ValueError("conv2d layer needs kernel (kh, kw, cin, cout)")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.units is not None:
            out["units"] = self.units
        if self.kernel is not None:
            out["kernel"] = list(self.kernel)
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "LayerSpec":
        kernel = tuple(raw["kernel"]) if raw.get("kernel") else None
        return cls(raw["kind"], raw.get("units"), kernel)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base: parameterless layers reuse these defaults."""

    params: list[np.ndarray]
    grads: list[np.ndarray]

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError


class Dense(Layer):
    """Fully connected layer; flattens any trailing input dims."""

    def __init__(self, spec: LayerSpec, in_shape: tuple, rng, dtype):
        super().__init__()
        d_in = int(np.prod(in_shape))
        d_out = spec.units
        self.w = glorot_uniform(rng, (d_in, d_out), d_in, d_out, dtype)
        self.b = np.zeros(d_out, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self._in_shape = in_shape

    def output_shape(self, in_shape):
        return (self.w.shape[1],)

    def forward(self, x):
        self._x_shape = x.shape
        self._x = x.reshape(x.shape[0], -1)
        if self._x.shape[1] != self.w.shape[0]:
            raise ShapeError(
                f"dense expected {self.w.shape[0]} inputs, got {self._x.shape[1]}"
            )
        return self._x @ self.w + self.b

    def backward(self, g):
        self.grads[0] = self._x.T @ g
        self.grads[1] = g.sum(axis=0)
        return (g @ self.w.T).reshape(self._x_shape)

    def set_params(self, values):
        self.w, self.b = values
        self.params = [self.w, self.b]


class Conv2D(Layer):
    """3x3-style convolution, stride 1, zero-padded to preserve spatial dims."""

    def __init__(self, spec: LayerSpec, in_shape: tuple, rng, dtype):
        super().__init__()
        kh, kw, cin, cout = spec.kernel
        if len(in_shape) != 3 or in_shape[2] != cin:
            raise ShapeError(f"conv2d kernel expects {cin} channels, input shape {in_shape}")
        fan_in = kh * kw * cin
        fan_out = kh * kw * cout
        self.k = glorot_uniform(rng, (kh, kw, cin, cout), fan_in, fan_out, dtype)
        self.b = np.zeros(cout, dtype=dtype)
        self.params = [self.k, self.b]
        self.grads = [np.zeros_like(self.k), np.zeros_like(self.b)]

    def output_shape(self, in_shape):
        h, w, _ = in_shape
        return (h, w, self.k.shape[3])

    def _pad(self, x):
        kh, kw = self.k.shape[:2]
        pt, pb = (kh - 1) // 2, kh // 2
        pl, pr = (kw - 1) // 2, kw // 2
        return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))), (pt, pl)

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.k.shape[2]:
            raise ShapeError(f"conv2d expected NHWC with {self.k.shape[2]} channels, got {x.shape}")
        kh, kw = self.k.shape[:2]
        self._x_pad, _ = self._pad(x)
        n, h, w, _ = x.shape
        out = np.zeros((n, h, w, self.k.shape[3]), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                patch = self._x_pad[:, i : i + h, j : j + w, :]
                out += np.tensordot(patch, self.k[i, j], axes=([3], [0]))
        return out + self.b

    def backward(self, g):
        kh, kw = self.k.shape[:2]
        n, h, w, _ = g.shape
        dk = np.zeros_like(self.k)
        gx_pad = np.zeros_like(self._x_pad)
        for i in range(kh):
            for j in range(kw):
                patch = self._x_pad[:, i : i + h, j : j + w, :]
                dk[i, j] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
                gx_pad[:, i : i + h, j : j + w, :] += np.tensordot(g, self.k[i, j], axes=([3], [1]))
        self.grads[0] = dk
        self.grads[1] = g.sum(axis=(0, 1, 2))
        pt, pl = (kh - 1) // 2, (kw - 1) // 2
        return gx_pad[:, pt : pt + h, pl : pl + w, :]

    def set_params(self, values):
        self.k, self.b = values
        self.params = [self.k, self.b]


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped (floor)."""

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (h // 2, w // 2, c)

    def forward(self, x):
        n, h, w, c = x.shape
        ho, wo = h // 2, w // 2
        if ho == 0 or wo == 0:
            raise ShapeError(f"maxpool2 needs spatial dims >= 2, got {x.shape}")
        self._in_shape = x.shape
        win = (
            x[:, : ho * 2, : wo * 2, :]
            .reshape(n, ho, 2, wo, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, ho, wo, c, 4)
        )
        self._argmax = win.argmax(axis=4)
        return np.take_along_axis(win, self._argmax[..., None], axis=4)[..., 0]

    def backward(self, g):
        n, ho, wo, c = g.shape
        flat = np.zeros((n, ho, wo, c, 4), dtype=g.dtype)
        np.put_along_axis(flat, self._argmax[..., None], g[..., None], axis=4)
        win = flat.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        gx = np.zeros(self._in_shape, dtype=g.dtype)
        gx[:, : ho * 2, : wo * 2, :] = win.reshape(n, ho * 2, wo * 2, c)
        return gx


class Upsample2(Layer):
    """Nearest-neighbor 2x upsampling."""

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (h * 2, w * 2, c)

    def forward(self, x):
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, g):
        n, h2, w2, c = g.shape
        return g.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


class ReLU(Layer):
    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Sigmoid(Layer):
    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, g):
        return g * self._out * (1.0 - self._out)


_LAYER_CLASSES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2": MaxPool2,
    "upsample2": Upsample2,
    "relu": ReLU,
    "sigmoid": Sigmoid,
}


def build_layer(spec: LayerSpec, in_shape: tuple, rng, dtype) -> tuple[Layer, tuple]:
    cls = _LAYER_CLASSES[spec.kind]
    if spec.kind in ("dense", "conv2d"):
        layer = cls(spec, in_shape, rng, dtype)
    else:
        layer = cls()
        if spec.kind in ("maxpool2", "upsample2") and len(in_shape) != 3:
            raise ShapeError(f"{spec.kind} needs an NHWC input, sample shape {in_shape}")
    layer.spec = spec
    return layer, layer.output_shape(in_shape)
