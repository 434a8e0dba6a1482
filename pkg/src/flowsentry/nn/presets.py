"""Ready-made layer stacks for 28x28 grayscale work."""

from __future__ import annotations

from .layers import LayerSpec


def conv(kh, kw, cin, cout):
    return LayerSpec("conv2d", kernel=(kh, kw, cin, cout))


def autoencoder_arch(preset: str = "compact28", in_channels: int = 1) -> list[LayerSpec]:
    """`compact28` round-trips 28x28 (4 convs); `deep` needs dims divisible by 8
    and stacks 7 convs with 3 pool / 3 upsample steps."""
    c = in_channels
    if preset == "compact28":
        return [
            conv(3, 3, c, 8), LayerSpec("relu"), LayerSpec("maxpool2"),
            conv(3, 3, 8, 4), LayerSpec("relu"), LayerSpec("maxpool2"),
            LayerSpec("upsample2"),
            conv(3, 3, 4, 8), LayerSpec("relu"),
            LayerSpec("upsample2"),
            conv(3, 3, 8, c), LayerSpec("sigmoid"),
        ]
    if preset == "deep":
        return [
            conv(3, 3, c, 16), LayerSpec("relu"), LayerSpec("maxpool2"),
            conv(3, 3, 16, 8), LayerSpec("relu"), LayerSpec("maxpool2"),
            conv(3, 3, 8, 8), LayerSpec("relu"), LayerSpec("maxpool2"),
            conv(3, 3, 8, 8), LayerSpec("relu"), LayerSpec("upsample2"),
            conv(3, 3, 8, 8), LayerSpec("relu"), LayerSpec("upsample2"),
            conv(3, 3, 8, 16), LayerSpec("relu"), LayerSpec("upsample2"),
            conv(3, 3, 16, c), LayerSpec("sigmoid"),
        ]
    if preset == "light":
        # single pool level keeps detail; the denoiser default
        return [
            conv(3, 3, c, 8), LayerSpec("relu"), LayerSpec("maxpool2"),
            conv(3, 3, 8, 8), LayerSpec("relu"), LayerSpec("upsample2"),
            conv(3, 3, 8, c), LayerSpec("sigmoid"),
        ]
    raise ValueError(f"unknown autoencoder preset {preset!r}")


def classifier_arch(n_classes: int = 10, in_channels: int = 1) -> list[LayerSpec]:
    """Two conv blocks plus a dense softmax head (logits out)."""
    return [
        conv(3, 3, in_channels, 8), LayerSpec("relu"), LayerSpec("maxpool2"),
        conv(3, 3, 8, 16), LayerSpec("relu"), LayerSpec("maxpool2"),
        LayerSpec("dense", units=n_classes),
    ]
