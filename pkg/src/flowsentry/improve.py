"""Model improvers: retrain-with-feedback and denoiser wrapping.

Both follow the same gate: build a candidate, score it on the frozen
evaluation suite, and accept only a strict quality improvement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data_io import Dataset
from .errors import EmptyFeedback, FormatError, ShapeError
from .feedback import FeedbackBatch
from .nn import (
    LayerSpec,
    Model,
    TrainConfig,
    evaluate,
    retrain_classifier,
    train_denoiser,
)

COMPOUND_MAGIC = b"FSCM"

RETRAIN_EPOCHS = 5
RETRAIN_LR_FACTOR = 0.1


@dataclass(frozen=True)
class EvalSuite:
    """Frozen clean + corrupted evaluation sets; quality is their mean accuracy."""

    clean: Dataset
    corrupted: Dataset

    def quality(self, model) -> tuple[float, float, float]:
        acc_clean = evaluate(model, self.clean.images, self.clean.labels)
        acc_corr = evaluate(model, self.corrupted.images, self.corrupted.labels)
        return (acc_clean + acc_corr) / 2.0, acc_clean, acc_corr


class CompoundModel:
    """Denoiser filtering inputs ahead of a predictor."""

    def __init__(self, predictor: Model, denoiser: Model):
        if denoiser.output_shape != predictor.input_shape:
            raise ShapeError(
                f"denoiser emits {denoiser.output_shape}, predictor wants "
                f"{predictor.input_shape}")
        self.predictor = predictor
        self.denoiser = denoiser
        self.input_shape = denoiser.input_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.predictor.forward(self.denoiser.forward(x))

    def save_bytes(self) -> bytes:
        d = self.denoiser.save_bytes()
        p = self.predictor.save_bytes()
        return COMPOUND_MAGIC + struct.pack("<I", len(d)) + d + p

    @classmethod
    def load_bytes(cls, data: bytes) -> "CompoundModel":
        if data[:4] != COMPOUND_MAGIC:
            raise FormatError("not a compound model blob")
        (dlen,) = struct.unpack("<I", data[4:8])
        denoiser = Model.load_bytes(data[8 : 8 + dlen])
        predictor = Model.load_bytes(data[8 + dlen :])
        return cls(predictor, denoiser)


def wrap(predictor: Model, denoiser: Model) -> CompoundModel:
    return CompoundModel(predictor, denoiser)


def load_model_blob(data: bytes):
    if data[:4] == COMPOUND_MAGIC:
        return CompoundModel.load_bytes(data)
    return Model.load_bytes(data)


@dataclass
class ImprovementResult:
    accepted: bool
    old_q: float
    new_q: float | None = None
    new_model: object | None = None
    new_model_ref: str | None = None
    acc_clean: float | None = None
    acc_corrupted: float | None = None

    def __post_init__(self):
        if self.accepted and (self.new_q is None or not self.new_q > self.old_q):
            raise ValueError("accepted results require new_q > old_q")


def _finalize(candidate, q_new, detail, q_old) -> ImprovementResult:
    if q_new > q_old:
        return ImprovementResult(True, q_old, q_new, candidate,
                                 acc_clean=detail[0], acc_corrupted=detail[1])
    return ImprovementResult(False, q_old, acc_clean=detail[0], acc_corrupted=detail[1])


def _log_and_promote(result: ImprovementResult, candidate_blob, tracker, run_id,
                     node_id, feedback_service, old_ref) -> ImprovementResult:
    if tracker is not None and run_id:
        if result.accepted and candidate_blob is not None:
            result.new_model_ref = tracker.log_artifact(run_id, node_id,
                                                        "improved-model", candidate_blob)
        tracker.save_metadata(
            [
                {"node_id": node_id, "key": "improver/old_q", "kind": "metric",
                 "value": result.old_q},
                {"node_id": node_id, "key": "improver/new_q", "kind": "metric",
                 "value": result.new_q if result.new_q is not None else float("nan")},
                {"node_id": node_id, "key": "improver/accepted", "kind": "tag",
                 "value": str(result.accepted).lower()},
            ],
            run_id,
        )
    if feedback_service is not None and result.accepted:
        feedback_service.request_promotion(
            old_ref or "", result.new_model_ref or "candidate",
            result.old_q, result.new_q, run_id or "")
    return result


def model_trainer_improver(model: Model, feedback: FeedbackBatch,
                           x_train, y_train, q: float, eval_suite: EvalSuite,
                           epochs: int = RETRAIN_EPOCHS, lr: float | None = None,
                           batch_size: int = 32, seed: int = 0,
                           tracker=None, run_id: str | None = None,
                           node_id: str = "improver",
                           feedback_service=None, old_ref: str | None = None
                           ) -> ImprovementResult:
    """Retrain on training data augmented with human-labeled critical samples."""
    if feedback.kind != "labels":
        raise ValueError(f"expected a labels batch, got {feedback.kind!r}")
    if len(feedback) == 0:
        raise EmptyFeedback("no labeled samples to retrain with")
    x_fb = np.stack([item.sample for item in feedback.items])
    y_fb = np.array([item.label for item in feedback.items], dtype=np.int64)
    x_aug = np.concatenate([_images(x_train), x_fb])
    y_aug = np.concatenate([np.asarray(y_train, dtype=np.int64), y_fb])

    lr = lr if lr is not None else _base_lr(model) * RETRAIN_LR_FACTOR
    candidate = retrain_classifier(model, x_aug, y_aug, epochs, lr, batch_size, seed)
    q_new, acc_clean, acc_corr = eval_suite.quality(candidate)
    result = _finalize(candidate, q_new, (acc_clean, acc_corr), q)
    blob = candidate.save_bytes() if result.accepted else None
    return _log_and_promote(result, blob, tracker, run_id, node_id,
                            feedback_service, old_ref)


def model_denoiser_wrapper_improver(model: Model, feedback: FeedbackBatch,
                                    x_train, y_train, q: float, eval_suite: EvalSuite,
                                    denoiser_arch: list[LayerSpec],
                                    denoiser_cfg: TrainConfig,
                                    epochs: int = RETRAIN_EPOCHS,
                                    lr: float | None = None, batch_size: int = 32,
                                    seed: int = 0, identity_anchor_n: int = 0,
                                    tracker=None,
                                    run_id: str | None = None,
                                    node_id: str = "improver",
                                    feedback_service=None,
                                    old_ref: str | None = None) -> ImprovementResult:
    """Retrain on matched pairs, fit a denoiser on them, wrap, and gate.

    Pair labels come from the matched clean training samples. With
    `identity_anchor_n` > 0, that many clean training images join the denoiser
    set as identity pairs, anchoring it on uncorrupted structure.
    """
    if feedback.kind != "pairs":
        raise ValueError(f"expected a pairs batch, got {feedback.kind!r}")
    if len(feedback) == 0:
        raise EmptyFeedback("no matched pairs to improve with")
    train_images = _images(x_train)
    y_train = np.asarray(y_train, dtype=np.int64)
    x_corr = np.stack([item.corrupted_sample for item in feedback.items])
    match_idx = np.array([item.match_index for item in feedback.items], dtype=np.int64)
    x_clean = train_images[match_idx]
    y_fb = y_train[match_idx]

    lr = lr if lr is not None else _base_lr(model) * RETRAIN_LR_FACTOR
    retrained = retrain_classifier(model, np.concatenate([train_images, x_corr]),
                                   np.concatenate([y_train, y_fb]),
                                   epochs, lr, batch_size, seed)
    den_targets, den_inputs = x_clean, x_corr
    if identity_anchor_n > 0:
        anchor_rng = np.random.default_rng(seed)
        take = min(identity_anchor_n, len(train_images))
        anchors = train_images[anchor_rng.choice(len(train_images), take, replace=False)]
        den_targets = np.concatenate([x_clean, anchors])
        den_inputs = np.concatenate([x_corr, anchors])
    denoiser = train_denoiser(den_targets, den_inputs, denoiser_arch, denoiser_cfg)
    candidate = wrap(retrained, denoiser)
    q_new, acc_clean, acc_corr = eval_suite.quality(candidate)
    result = _finalize(candidate, q_new, (acc_clean, acc_corr), q)
    blob = candidate.save_bytes() if result.accepted else None
    return _log_and_promote(result, blob, tracker, run_id, node_id,
                            feedback_service, old_ref)


def _images(x) -> np.ndarray:
    return np.asarray(getattr(x, "images", x))


def _base_lr(model: Model) -> float:
    return float(model.meta.get("lr", 0.1))
