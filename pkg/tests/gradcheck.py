"""Central-finite-difference oracle shared by nn tests and the acceptance suite."""

import numpy as np

from flowsentry.nn import LayerSpec, Model

DELTA = 1e-4


def numeric_vs_analytic(model: Model, x: np.ndarray, scalar_loss, loss_grad) -> float:
    """Worst relative error between backprop and central differences.

    `scalar_loss(out) -> float` and `loss_grad(out) -> array` define the head.
    """
    out = model.forward(x)
    model.backward(loss_grad(out))
    analytic = [g.copy() for g in model.grads()]
    worst = 0.0
    for pi, p in enumerate(model.params()):
        flat = p.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + DELTA
            up = scalar_loss(model.forward(x))
            flat[k] = orig - DELTA
            down = scalar_loss(model.forward(x))
            flat[k] = orig
            numeric = (up - down) / (2 * DELTA)
            ana = analytic[pi].ravel()[k]
            rel = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-8)
            worst = max(worst, rel)
    return worst


def layer_instance_specs(kind: str, rng) -> tuple[list[LayerSpec], tuple]:
    """A random small model exercising one layer kind, with its input shape."""
    cin = int(rng.integers(1, 3))
    cout = int(rng.integers(1, 4))
    h = int(rng.integers(4, 7))
    w = int(rng.integers(4, 7))
    if kind == "dense":
        return [LayerSpec("dense", units=int(rng.integers(2, 6)))], (h * w,)
    if kind == "conv2d":
        k = int(rng.choice([1, 3]))
        return [LayerSpec("conv2d", kernel=(k, k, cin, cout))], (h, w, cin)
    if kind == "maxpool2":
        return ([LayerSpec("conv2d", kernel=(3, 3, cin, cout)), LayerSpec("maxpool2")],
                (h, w, cin))
    if kind == "upsample2":
        return ([LayerSpec("conv2d", kernel=(3, 3, cin, cout)), LayerSpec("upsample2")],
                (h, w, cin))
    if kind == "relu":
        return ([LayerSpec("dense", units=5), LayerSpec("relu"),
                 LayerSpec("dense", units=3)], (h,))
    if kind == "sigmoid":
        return ([LayerSpec("dense", units=4), LayerSpec("sigmoid")], (h,))
    raise ValueError(kind)


def check_layer_kind(kind: str, seed: int) -> float:
    """FD-check a random instance of a layer kind under a quadratic head."""
    rng = np.random.default_rng(seed)
    arch, in_shape = layer_instance_specs(kind, rng)
    model = Model(arch, in_shape, seed=seed, dtype=np.float64)
    n = int(rng.integers(1, 4))
    x = rng.random((n,) + in_shape)
    direction = rng.normal(size=(n,) + model.output_shape)

    def scalar_loss(out):
        return float((out * direction).sum() + 0.5 * (out**2).sum())

    def loss_grad(out):
        return direction + out

    return numeric_vs_analytic(model, x, scalar_loss, loss_grad)
