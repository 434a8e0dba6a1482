from .layers import LayerSpec
from .losses import bce_grad, bce_loss, bce_per_sample, softmax_ce_grad, softmax_ce_loss
from .model import Model, as_nhwc
from .presets import autoencoder_arch, classifier_arch
from .tied import TiedDenseAutoencoder
from .train import (
    TrainConfig,
    evaluate,
    fit_classifier,
    forward_logits,
    predict,
    reconstruction_losses,
    retrain_classifier,
    sgd_step,
    train_autoencoder,
    train_classifier,
    train_denoiser,
)

__all__ = [
    "LayerSpec",
    "Model",
    "TiedDenseAutoencoder",
    "TrainConfig",
    "as_nhwc",
    "autoencoder_arch",
    "bce_grad",
    "bce_loss",
    "bce_per_sample",
    "classifier_arch",
    "evaluate",
    "fit_classifier",
    "forward_logits",
    "predict",
    "reconstruction_losses",
    "retrain_classifier",
    "sgd_step",
    "softmax_ce_grad",
    "softmax_ce_loss",
    "train_autoencoder",
    "train_classifier",
    "train_denoiser",
]
