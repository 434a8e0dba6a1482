"""Entrypoints for scenario workflow nodes: `python -m flowsentry.tasks <step>`.

Steps communicate through the shared run directory (data bundles as .npz,
small JSON result files) and the tracker/feedback services reachable at
TRACKER_ENDPOINT. Each step runs inside its own node directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .data_io import CorruptionSpec, Dataset, corrupt, load_idx
from .drift import SelectorConfig, critical_point_selector, fit_or_load_autoencoder
from .feedback import FeedbackBatch, FeedbackClient, LabelItem, PairItem
from .improve import (
    EvalSuite,
    load_model_blob,
    model_denoiser_wrapper_improver,
    model_trainer_improver,
)
from .nn import Model, TrainConfig, autoencoder_arch, classifier_arch, predict, train_classifier
from .scenarios import ScenarioSpec
from .tracker import TrackerClient


def _env(name: str) -> str:
    value = os.environ.get(name)
    if not value:
        raise RuntimeError(f"{name} not set; task steps run under the node runtime")
    return value


def _scenario() -> tuple[ScenarioSpec, dict, str | None, str]:
    raw = json.loads((Path(_env("SHARED_ROOT")) / "scenario.json").read_text())
    spec = ScenarioSpec.from_json(raw["spec"])
    return spec, raw["data_paths"], raw.get("cache_dir"), raw["fingerprint"]


def _tracker() -> TrackerClient:
    return TrackerClient(_env("TRACKER_ENDPOINT"))


def _feedback() -> FeedbackClient:
    return FeedbackClient(_env("TRACKER_ENDPOINT"))


def _log(entries: list[dict]) -> None:
    tagged = [{"node_id": os.environ.get("NODE_ID", ""), **e} for e in entries]
    _tracker().save_metadata(tagged, _env("RUN_ID"))


def _input(name: str) -> Path:
    return Path(_env(f"INPUT_{name.upper()}"))


def _output(name: str) -> Path:
    return Path(_env(f"OUTPUT_{name.upper()}"))


def _load_bundle() -> dict:
    with np.load(_input("data"), allow_pickle=False) as z:
        return {k: z[k] for k in z.files}


def _eval_suite(bundle: dict) -> EvalSuite:
    return EvalSuite(
        clean=Dataset(bundle["test_x"], bundle["test_y"], "eval-clean"),
        corrupted=Dataset(bundle["testc_x"], bundle["testc_y"], "eval-corrupted"),
    )


# -- steps -------------------------------------------------------------------------


def step_ingest() -> None:
    spec, paths, _, fingerprint = _scenario()
    train_x = load_idx(paths["train_images"])[: spec.train_n]
    train_y = load_idx(paths["train_labels"])[: spec.train_n]
    test_x = load_idx(paths["test_images"])[: spec.test_n]
    test_y = load_idx(paths["test_labels"])[: spec.test_n]
    pool_x = load_idx(paths["pool_images"])[: spec.pool_n]
    pool_y = load_idx(paths["pool_labels"])[: spec.pool_n]

    kinds = [k for k, _ in spec.corruptions]

    # corrupted evaluation set: contiguous blocks of the clean test set
    per = len(test_x) // len(kinds)
    testc_parts, testc_kind = [], []
    for k, (kind, severity) in enumerate(spec.corruptions):
        lo = k * per
        hi = (k + 1) * per if k < len(kinds) - 1 else len(test_x)
        block = Dataset(test_x[lo:hi], test_y[lo:hi], "testc")
        corrupted = corrupt(block, CorruptionSpec(kind, severity,
                                                  seed=spec.seed * 1000 + k))
        testc_parts.append(corrupted.images)
        testc_kind.append(np.full(hi - lo, k, dtype=np.int64))
    testc_x = np.concatenate(testc_parts)
    testc_kind = np.concatenate(testc_kind)

    # runtime stream: clean pool samples mixed with corrupted training samples
    rng = np.random.default_rng(spec.seed * 7919 + 13)
    n_corr = int(round(spec.stream_n * spec.stream_corrupted_fraction))
    n_clean = spec.stream_n - n_corr
    clean_src = rng.choice(len(pool_x), size=n_clean, replace=False)
    corr_src = rng.choice(len(train_x), size=n_corr, replace=False)

    stream_x = [pool_x[clean_src]]
    stream_y = [pool_y[clean_src]]
    stream_kind = [np.full(n_clean, -1, dtype=np.int64)]
    stream_source = [clean_src.astype(np.int64)]
    per_kind = n_corr // len(kinds)
    for k, (kind, severity) in enumerate(spec.corruptions):
        lo = k * per_kind
        hi = (k + 1) * per_kind if k < len(kinds) - 1 else n_corr
        src = corr_src[lo:hi]
        block = Dataset(train_x[src], train_y[src], "stream")
        corrupted = corrupt(block, CorruptionSpec(kind, severity,
                                                  seed=spec.seed * 1000 + 100 + k))
        stream_x.append(corrupted.images)
        stream_y.append(train_y[src])
        stream_kind.append(np.full(hi - lo, k, dtype=np.int64))
        stream_source.append(src.astype(np.int64))
    order = rng.permutation(spec.stream_n)
    bundle = {
        "train_x": train_x, "train_y": train_y,
        "test_x": test_x, "test_y": test_y,
        "testc_x": testc_x, "testc_y": test_y, "testc_kind": testc_kind,
        "stream_x": np.concatenate(stream_x)[order],
        "stream_y": np.concatenate(stream_y)[order],
        "stream_kind": np.concatenate(stream_kind)[order],
        "stream_source": np.concatenate(stream_source)[order],
    }
    np.savez_compressed(_output("data"), **bundle)
    _log([
        {"key": "scenario/name", "kind": "param", "value": spec.name},
        {"key": "scenario/n_labels", "kind": "param", "value": float(spec.n_labels)},
        {"key": "scenario/seed", "kind": "param", "value": float(spec.seed)},
        {"key": "scenario/fingerprint", "kind": "tag", "value": fingerprint},
        {"key": "scenario/corruptions", "kind": "tag",
         "value": json.dumps([list(c) for c in spec.corruptions])},
        {"key": "ingest/stream_corrupted", "kind": "metric", "value": float(n_corr)},
    ])


def _classifier_cache_key(train_x, train_y, arch, cfg) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(train_x, dtype=np.float32).tobytes())
    digest.update(np.ascontiguousarray(train_y, dtype=np.int64).tobytes())
    digest.update(json.dumps([s.to_json() for s in arch]).encode())
    digest.update(f"cls|{cfg.epochs}|{cfg.batch_size}|{cfg.lr}|{cfg.seed}".encode())
    return digest.hexdigest()


def step_train_baseline() -> None:
    spec, _, cache_dir, _ = _scenario()
    bundle = _load_bundle()
    arch = classifier_arch()
    cfg = TrainConfig(epochs=spec.cls_epochs, batch_size=spec.cls_batch,
                      lr=spec.cls_lr, seed=spec.seed)
    model = None
    cache_path = None
    if cache_dir:
        key = _classifier_cache_key(bundle["train_x"], bundle["train_y"], arch, cfg)
        cache_path = Path(cache_dir) / f"cls-{key}.bin"
        if cache_path.exists():
            model = Model.load_bytes(cache_path.read_bytes())
    if model is None:
        model = train_classifier(bundle["train_x"], bundle["train_y"], arch, cfg)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            cache_path.write_bytes(model.save_bytes())

    suite = _eval_suite(bundle)
    q, acc_clean, acc_corr = suite.quality(model)
    ref = _tracker().log_artifact(_env("RUN_ID"), _env("NODE_ID"),
                                  "baseline-model", model.save_bytes())
    _output("baseline").write_text(json.dumps({
        "model_ref": ref, "q": q,
        "accuracy_clean": acc_clean, "accuracy_corrupted": acc_corr,
    }))
    _log([
        {"key": "baseline/q", "kind": "metric", "value": q},
        {"key": "baseline/accuracy_clean", "kind": "metric", "value": acc_clean},
        {"key": "baseline/accuracy_corrupted", "kind": "metric", "value": acc_corr},
    ])


def step_drift_check() -> None:
    spec, _, cache_dir, _ = _scenario()
    bundle = _load_bundle()
    arch = autoencoder_arch("compact28")
    cfg = TrainConfig(epochs=spec.ae_epochs, batch_size=spec.ae_batch,
                      lr=spec.ae_lr, seed=spec.seed)
    model = fit_or_load_autoencoder(bundle["train_x"], arch, cfg, cache_dir)
    report = critical_point_selector(
        model, bundle["train_x"], bundle["stream_x"],
        SelectorConfig(n_critical=spec.n_labels))
    np.savez_compressed(_output("critical"),
                        indices=report.indices, samples=report.samples)
    _output("report").write_text(json.dumps(report.to_json(), indent=2))
    _tracker().log_artifact(_env("RUN_ID"), _env("NODE_ID"), "critical-samples",
                            _output("critical").read_bytes())
    _log([
        {"key": "drift/flagged", "kind": "metric",
         "value": float(len(report.flagged_indices))},
        {"key": "drift/selected", "kind": "metric", "value": float(len(report))},
        {"key": "drift/threshold_low", "kind": "metric", "value": report.thresholds[0]},
        {"key": "drift/threshold_high", "kind": "metric", "value": report.thresholds[1]},
    ])


def step_random_select() -> None:
    spec, _, _, _ = _scenario()
    bundle = _load_bundle()
    rng = np.random.default_rng(spec.seed * 7919 + 29)
    take = min(spec.n_labels, len(bundle["stream_x"]))
    indices = np.sort(rng.choice(len(bundle["stream_x"]), size=take, replace=False))
    np.savez_compressed(_output("critical"),
                        indices=indices, samples=bundle["stream_x"][indices])
    _log([{"key": "random/selected", "kind": "metric", "value": float(take)}])


def step_human_label() -> None:
    spec, _, _, _ = _scenario()
    bundle = _load_bundle()
    with np.load(_input("critical")) as z:
        indices, samples = z["indices"], z["samples"]
    client = _feedback()
    run_id = _env("RUN_ID")
    client.enqueue_labeling(samples, indices, run_id)

    if spec.simulated_human:
        for task in client.get_label_tasks(run_id, status="pending"):
            oracle = int(bundle["stream_y"][task["origin_index"]])
            client.submit_label(task["task_id"], oracle)
    else:
        _wait_for_humans(lambda: client.get_label_tasks(run_id, status="pending"),
                         spec.node_timeout)

    batch = client.collect_feedback(run_id, "labels")
    labeled = [i for i in batch["items"]]
    np.savez_compressed(
        _output("feedback"),
        samples=np.stack([i["sample"] for i in labeled]) if labeled else
        np.zeros((0,) + samples.shape[1:], dtype=np.float32),
        labels=np.array([i["label"] for i in labeled], dtype=np.int64),
        origin=np.array([i["origin_index"] for i in labeled], dtype=np.int64),
    )
    _log([{"key": "human/labels", "kind": "metric", "value": float(len(labeled))}])


def step_human_find() -> None:
    spec, _, _, _ = _scenario()
    bundle = _load_bundle()
    with np.load(_input("critical")) as z:
        indices, samples = z["indices"], z["samples"]
    run_id = _env("RUN_ID")

    if spec.simulated_human:
        # the oracle pairs each corrupted stream sample with its clean source
        matches, corrs, origins, skipped = [], [], [], 0
        for idx, sample in zip(indices, samples):
            if bundle["stream_kind"][idx] >= 0:
                matches.append(int(bundle["stream_source"][idx]))
                corrs.append(sample)
                origins.append(int(idx))
            else:
                skipped += 1
        corr_arr = (np.stack(corrs) if corrs
                    else np.zeros((0,) + samples.shape[1:], dtype=np.float32))
    else:
        client = _feedback()
        client.enqueue_finding(samples, indices, bundle["train_x"], run_id,
                               pool_size=spec.pool_size)
        _wait_for_humans(lambda: client.get_find_tasks(run_id, status="pending"),
                         spec.node_timeout)
        batch = client.collect_feedback(run_id, "pairs")
        matches = [i["match_index"] for i in batch["items"]]
        corrs = [i["sample"] for i in batch["items"]]
        origins = [i["origin_index"] for i in batch["items"]]
        skipped = len(indices) - len(matches)
        corr_arr = (np.stack(corrs) if corrs
                    else np.zeros((0,) + samples.shape[1:], dtype=np.float32))

    np.savez_compressed(
        _output("feedback"),
        corrupted=corr_arr,
        match=np.array(matches, dtype=np.int64),
        origin=np.array(origins, dtype=np.int64),
    )
    _log([
        {"key": "human/pairs", "kind": "metric", "value": float(len(matches))},
        {"key": "human/skipped", "kind": "metric", "value": float(skipped)},
    ])


def step_self_label() -> None:
    # naive path: the model labels the stream with its own predictions
    _, _, _, _ = _scenario()
    bundle = _load_bundle()
    baseline = json.loads(_input("baseline").read_text())
    model = Model.load_bytes(_tracker().get_artifact(baseline["model_ref"]))
    preds = predict(model, bundle["stream_x"])
    np.savez_compressed(
        _output("feedback"),
        samples=bundle["stream_x"],
        labels=preds.astype(np.int64),
        origin=np.arange(len(preds), dtype=np.int64),
    )
    _log([{"key": "naive/predicted_labels", "kind": "metric",
           "value": float(len(preds))}])


def _wait_for_humans(pending_fn, timeout: float, poll: float = 2.0) -> None:
    deadline = time.monotonic() + max(timeout - 30.0, poll)
    while pending_fn():
        if time.monotonic() > deadline:
            raise TimeoutError("human feedback did not complete in time")
        time.sleep(poll)


def step_improve_retrain() -> None:
    spec, _, _, _ = _scenario()
    bundle = _load_bundle()
    baseline = json.loads(_input("baseline").read_text())
    model = Model.load_bytes(_tracker().get_artifact(baseline["model_ref"]))
    with np.load(_input("feedback")) as z:
        fb_samples, fb_labels, fb_origin = z["samples"], z["labels"], z["origin"]
    items = tuple(LabelItem(int(o), s, int(l))
                  for o, s, l in zip(fb_origin, fb_samples, fb_labels))
    batch = FeedbackBatch("labels", items, _env("RUN_ID"))
    result = model_trainer_improver(
        model, batch, bundle["train_x"], bundle["train_y"], baseline["q"],
        _eval_suite(bundle), epochs=spec.retrain_epochs,
        batch_size=spec.cls_batch, seed=spec.seed,
        tracker=_tracker(), run_id=_env("RUN_ID"), node_id=_env("NODE_ID"),
        feedback_service=_feedback(), old_ref=baseline["model_ref"])
    _output("improve").write_text(json.dumps({
        "accepted": result.accepted, "old_q": result.old_q, "new_q": result.new_q,
        "new_model_ref": result.new_model_ref,
    }))


def step_improve_denoise() -> None:
    spec, _, _, _ = _scenario()
    bundle = _load_bundle()
    baseline = json.loads(_input("baseline").read_text())
    model = Model.load_bytes(_tracker().get_artifact(baseline["model_ref"]))
    with np.load(_input("feedback")) as z:
        corrupted, match, origin = z["corrupted"], z["match"], z["origin"]
    items = tuple(PairItem(int(o), c, int(m))
                  for o, c, m in zip(origin, corrupted, match))
    batch = FeedbackBatch("pairs", items, _env("RUN_ID"))
    result = model_denoiser_wrapper_improver(
        model, batch, bundle["train_x"], bundle["train_y"], baseline["q"],
        _eval_suite(bundle),
        denoiser_arch=autoencoder_arch("light"),
        denoiser_cfg=TrainConfig(epochs=spec.denoiser_epochs, batch_size=16,
                                 lr=spec.denoiser_lr, seed=spec.seed),
        epochs=spec.retrain_epochs, batch_size=spec.cls_batch, seed=spec.seed,
        identity_anchor_n=spec.denoiser_identity_n,
        tracker=_tracker(), run_id=_env("RUN_ID"), node_id=_env("NODE_ID"),
        feedback_service=_feedback(), old_ref=baseline["model_ref"])
    _output("improve").write_text(json.dumps({
        "accepted": result.accepted, "old_q": result.old_q, "new_q": result.new_q,
        "new_model_ref": result.new_model_ref,
    }))


def step_evaluate() -> None:
    spec, _, _, fingerprint = _scenario()
    bundle = _load_bundle()
    baseline = json.loads(_input("baseline").read_text())
    client = _feedback()
    if not spec.simulated_human:
        _wait_for_humans(lambda: client.list_promotions("pending"), spec.node_timeout)
    active_ref = client.active_model_ref() or baseline["model_ref"]
    model = load_model_blob(_tracker().get_artifact(active_ref))

    test = Dataset(bundle["test_x"], bundle["test_y"], "eval-clean")
    from .nn import evaluate as model_accuracy

    acc_clean = model_accuracy(model, test.images, test.labels)
    kinds = [k for k, _ in spec.corruptions]
    per_kind = {}
    for k, kind in enumerate(kinds):
        mask = bundle["testc_kind"] == k
        per_kind[kind] = model_accuracy(model, bundle["testc_x"][mask],
                                        bundle["testc_y"][mask])
    acc_corr = float(np.mean(list(per_kind.values())))
    delta = client.ledger_total()
    row = {
        "run_id": _env("RUN_ID"),
        "scenario": spec.name,
        "n_labels": spec.n_labels,
        "seed": spec.seed,
        "accuracy_clean": acc_clean,
        "accuracy_corrupted": acc_corr,
        "accuracy_mean": (acc_clean + acc_corr) / 2.0,
        "per_kind": per_kind,
        "improvement_delta": delta,
        "accepted": active_ref != baseline["model_ref"],
        "fingerprint": fingerprint,
    }
    _output("row").write_text(json.dumps(row, indent=2))
    _log([
        {"key": "row/accuracy_clean", "kind": "metric", "value": acc_clean},
        {"key": "row/accuracy_corrupted", "kind": "metric", "value": acc_corr},
        {"key": "row/accuracy_mean", "kind": "metric", "value": row["accuracy_mean"]},
        {"key": "row/improvement_delta", "kind": "metric", "value": delta},
        {"key": "row/json", "kind": "tag", "value": json.dumps(row)},
    ])


STEPS = {
    "ingest": step_ingest,
    "train-baseline": step_train_baseline,
    "drift-check": step_drift_check,
    "random-select": step_random_select,
    "human-label": step_human_label,
    "human-find": step_human_find,
    "self-label": step_self_label,
    "improve-retrain": step_improve_retrain,
    "improve-denoise": step_improve_denoise,
    "evaluate": step_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 1 or argv[0] not in STEPS:
        print(f"usage: python -m flowsentry.tasks <{'|'.join(STEPS)}>", file=sys.stderr)
        return 2
    STEPS[argv[0]]()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
