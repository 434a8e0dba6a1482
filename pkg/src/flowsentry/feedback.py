"""Human-in-the-loop backend: label/find task queues and the promotion gate.

Every mutation is journaled (jsonl, fsynced) before it is acknowledged, so a
restarted service replays to the exact same state.
"""

from __future__ import annotations

import base64
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    Conflict,
    DuplicateBatch,
    EmptyCriticalSet,
    EmptyFeedback,
    Incomplete,
    InvalidLabel,
    InvalidSpec,
    NotAnImprovement,
    NotFound,
)
from .graph import ImprovementLedger

N_CLASSES = 10


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    return {"shape": list(arr.shape), "dtype": str(arr.dtype),
            "data": base64.b64encode(arr.tobytes()).decode()}


def _decode_array(raw: dict) -> np.ndarray:
    buf = base64.b64decode(raw["data"])
    return np.frombuffer(buf, dtype=raw["dtype"]).reshape(raw["shape"]).copy()


@dataclass
class LabelTask:
    task_id: str
    run_id: str
    sample: np.ndarray
    origin_index: int
    rank: int
    status: str = "pending"          # pending | labeled | skipped
    label: int | None = None

    def to_json(self, with_sample: bool = True) -> dict:
        out = {
            "task_id": self.task_id,
            "run_id": self.run_id,
            "origin_index": self.origin_index,
            "rank": self.rank,
            "status": self.status,
            "label": self.label,
        }
        if with_sample:
            out["sample"] = _encode_array(self.sample)
        return out


@dataclass
class FindCandidate:
    train_index: int
    distance: float
    sample: np.ndarray


@dataclass
class FindTask:
    task_id: str
    run_id: str
    corrupted_sample: np.ndarray
    origin_index: int
    rank: int
    candidates: list[FindCandidate]
    status: str = "pending"          # pending | matched | skipped
    match_index: int | None = None

    @property
    def candidate_pool(self) -> list[int]:
        return [c.train_index for c in self.candidates]

    def to_json(self, with_sample: bool = True) -> dict:
        out = {
            "task_id": self.task_id,
            "run_id": self.run_id,
            "origin_index": self.origin_index,
            "rank": self.rank,
            "status": self.status,
            "match_index": self.match_index,
            "candidates": [
                {"train_index": c.train_index, "distance": c.distance}
                for c in self.candidates
            ],
        }
        if with_sample:
            out["sample"] = _encode_array(self.corrupted_sample)
        return out


@dataclass(frozen=True)
class LabelItem:
    origin_index: int
    sample: np.ndarray
    label: int


@dataclass(frozen=True)
class PairItem:
    origin_index: int
    corrupted_sample: np.ndarray
    match_index: int


@dataclass(frozen=True)
class FeedbackBatch:
    kind: str                         # labels | pairs
    items: tuple
    run_id: str

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class PromotionRequest:
    promo_id: str
    run_id: str
    old_model_ref: str
    new_model_ref: str
    old_q: float
    new_q: float
    decision: str = "pending"         # pending | approved | rejected

    def to_json(self) -> dict:
        return {
            "promo_id": self.promo_id,
            "run_id": self.run_id,
            "old_model_ref": self.old_model_ref,
            "new_model_ref": self.new_model_ref,
            "old_q": self.old_q,
            "new_q": self.new_q,
            "delta": self.new_q - self.old_q,
            "decision": self.decision,
        }


class FeedbackService:
    def __init__(self, journal_path: str | Path | None = None, auto_approve: bool = False):
        self.auto_approve = auto_approve
        self._lock = threading.RLock()
        self._label_tasks: dict[str, LabelTask] = {}
        self._find_tasks: dict[str, FindTask] = {}
        self._promotions: dict[str, PromotionRequest] = {}
        self._enqueued: set[tuple[str, str]] = set()
        self._active_model_ref: str | None = None
        self.ledger = ImprovementLedger()
        self._journal_path = Path(journal_path) if journal_path else None
        if self._journal_path and self._journal_path.exists():
            self._replay()

    # -- journal --------------------------------------------------------------

    def _journal(self, event: dict) -> None:
        if self._journal_path is None:
            return
        self._journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._journal_path, "a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        for line in self._journal_path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                continue
            self._apply(event)

    def _apply(self, ev: dict) -> None:
        kind = ev["e"]
        if kind == "labels_enqueued":
            self._enqueued.add((ev["run"], "labels"))
            for raw in ev["tasks"]:
                task = LabelTask(raw["task_id"], ev["run"], _decode_array(raw["sample"]),
                                 raw["origin_index"], raw["rank"])
                self._label_tasks[task.task_id] = task
        elif kind == "finds_enqueued":
            self._enqueued.add((ev["run"], "pairs"))
            for raw in ev["tasks"]:
                cands = [FindCandidate(c["train_index"], c["distance"],
                                       _decode_array(c["sample"]))
                         for c in raw["candidates"]]
                task = FindTask(raw["task_id"], ev["run"],
                                _decode_array(raw["sample"]), raw["origin_index"],
                                raw["rank"], cands)
                self._find_tasks[task.task_id] = task
        elif kind == "label":
            task = self._label_tasks[ev["task"]]
            task.status, task.label = "labeled", ev["label"]
        elif kind == "label_skip":
            self._label_tasks[ev["task"]].status = "skipped"
        elif kind == "match":
            task = self._find_tasks[ev["task"]]
            task.status, task.match_index = "matched", ev["index"]
        elif kind == "find_skip":
            self._find_tasks[ev["task"]].status = "skipped"
        elif kind == "promotion":
            promo = PromotionRequest(ev["id"], ev["run"], ev["old_ref"], ev["new_ref"],
                                     ev["old_q"], ev["new_q"])
            self._promotions[promo.promo_id] = promo
        elif kind == "promotion_resolved":
            promo = self._promotions[ev["id"]]
            promo.decision = ev["decision"]
            if promo.decision == "approved":
                self._active_model_ref = promo.new_model_ref
                self.ledger.add(promo.new_q - promo.old_q, promo.run_id)

    # -- labeling --------------------------------------------------------------

    def enqueue_labeling(self, report, run_id: str) -> list[LabelTask]:
        samples = getattr(report, "samples", None)
        indices = getattr(report, "indices", None)
        if samples is None or len(samples) == 0:
            raise EmptyCriticalSet("report carries no samples to label")
        with self._lock:
            if (run_id, "labels") in self._enqueued:
                raise DuplicateBatch(f"label tasks already enqueued for run {run_id!r}")
            tasks = [
                LabelTask(f"{run_id}/label/{rank}", run_id, np.asarray(sample),
                          int(idx), rank)
                for rank, (sample, idx) in enumerate(zip(samples, indices))
            ]
            self._journal({"e": "labels_enqueued", "run": run_id,
                           "tasks": [t.to_json() for t in tasks]})
            self._enqueued.add((run_id, "labels"))
            for t in tasks:
                self._label_tasks[t.task_id] = t
            return list(tasks)

    def get_label_tasks(self, run_id: str, status: str | None = None) -> list[LabelTask]:
        with self._lock:
            tasks = [t for t in self._label_tasks.values() if t.run_id == run_id]
            if status:
                tasks = [t for t in tasks if t.status == status]
            return sorted(tasks, key=lambda t: t.rank)

    def _label_task(self, task_id: str) -> LabelTask:
        try:
            return self._label_tasks[task_id]
        except KeyError:
            raise NotFound(f"no label task {task_id!r}") from None

    def submit_label(self, task_id: str, label: int) -> LabelTask:
        with self._lock:
            task = self._label_task(task_id)
            if not isinstance(label, (int, np.integer)) or not 0 <= int(label) < N_CLASSES:
                raise InvalidLabel(f"label must lie in 0..{N_CLASSES - 1}, got {label!r}")
            if task.status != "pending":
                raise Conflict(f"task {task_id!r} already {task.status}")
            self._journal({"e": "label", "task": task_id, "label": int(label)})
            task.status, task.label = "labeled", int(label)
            return task

    def skip_label(self, task_id: str) -> LabelTask:
        with self._lock:
            task = self._label_task(task_id)
            if task.status != "pending":
                raise Conflict(f"task {task_id!r} already {task.status}")
            self._journal({"e": "label_skip", "task": task_id})
            task.status = "skipped"
            return task

    # -- finding ----------------------------------------------------------------

    def enqueue_finding(self, report, x_train, run_id: str, pool_size: int = 8) -> list[FindTask]:
        samples = getattr(report, "samples", None)
        indices = getattr(report, "indices", None)
        if samples is None or len(samples) == 0:
            raise EmptyCriticalSet("report carries no samples to match")
        train = np.asarray(getattr(x_train, "images", x_train), dtype=np.float64)
        flat_train = train.reshape(len(train), -1)
        with self._lock:
            if (run_id, "pairs") in self._enqueued:
                raise DuplicateBatch(f"find tasks already enqueued for run {run_id!r}")
            tasks = []
            for rank, (sample, idx) in enumerate(zip(samples, indices)):
                flat = np.asarray(sample, dtype=np.float64).ravel()
                dist = np.sqrt(((flat_train - flat) ** 2).sum(axis=1))
                nearest = np.argsort(dist, kind="stable")[:pool_size]
                cands = [FindCandidate(int(k), float(dist[k]), train[k].astype(np.float32))
                         for k in nearest]
                tasks.append(FindTask(f"{run_id}/find/{rank}", run_id,
                                      np.asarray(sample), int(idx), rank, cands))
            self._journal({
                "e": "finds_enqueued", "run": run_id,
                "tasks": [
                    {**t.to_json(),
                     "candidates": [
                         {"train_index": c.train_index, "distance": c.distance,
                          "sample": _encode_array(c.sample)}
                         for c in t.candidates
                     ]}
                    for t in tasks
                ],
            })
            self._enqueued.add((run_id, "pairs"))
            for t in tasks:
                self._find_tasks[t.task_id] = t
            return list(tasks)

    def get_find_tasks(self, run_id: str, status: str | None = None) -> list[FindTask]:
        with self._lock:
            tasks = [t for t in self._find_tasks.values() if t.run_id == run_id]
            if status:
                tasks = [t for t in tasks if t.status == status]
            return sorted(tasks, key=lambda t: t.rank)

    def _find_task(self, task_id: str) -> FindTask:
        try:
            return self._find_tasks[task_id]
        except KeyError:
            raise NotFound(f"no find task {task_id!r}") from None

    def submit_match(self, task_id: str, match_index: int) -> FindTask:
        with self._lock:
            task = self._find_task(task_id)
            if task.status != "pending":
                raise Conflict(f"task {task_id!r} already {task.status}")
            if int(match_index) not in task.candidate_pool:
                raise InvalidSpec(f"{match_index} is not among the offered candidates")
            self._journal({"e": "match", "task": task_id, "index": int(match_index)})
            task.status, task.match_index = "matched", int(match_index)
            return task

    def skip_find(self, task_id: str) -> FindTask:
        with self._lock:
            task = self._find_task(task_id)
            if task.status != "pending":
                raise Conflict(f"task {task_id!r} already {task.status}")
            self._journal({"e": "find_skip", "task": task_id})
            task.status = "skipped"
            return task

    # -- feedback assembly ---------------------------------------------------------

    def collect_feedback(self, run_id: str, kind: str) -> FeedbackBatch:
        with self._lock:
            if kind == "labels":
                tasks = self.get_label_tasks(run_id)
                pending = [t for t in tasks if t.status == "pending"]
                if pending:
                    raise Incomplete(f"{len(pending)} label tasks still pending",
                                     unresolved=len(pending))
                items = tuple(
                    LabelItem(t.origin_index, t.sample, t.label)
                    for t in tasks if t.status == "labeled"
                )
            elif kind == "pairs":
                tasks = self.get_find_tasks(run_id)
                pending = [t for t in tasks if t.status == "pending"]
                if pending:
                    raise Incomplete(f"{len(pending)} find tasks still pending",
                                     unresolved=len(pending))
                items = tuple(
                    PairItem(t.origin_index, t.corrupted_sample, t.match_index)
                    for t in tasks if t.status == "matched"
                )
            else:
                raise ValueError(f"unknown feedback kind {kind!r}")
            return FeedbackBatch(kind, items, run_id)

    # -- promotions --------------------------------------------------------------------

    def request_promotion(self, old_ref: str, new_ref: str, old_q: float, new_q: float,
                          run_id: str = "") -> PromotionRequest:
        if not new_q > old_q:
            raise NotAnImprovement(f"new quality {new_q} does not exceed {old_q}")
        with self._lock:
            promo_id = f"promo-{len(self._promotions)}"
            promo = PromotionRequest(promo_id, run_id, old_ref, new_ref,
                                     float(old_q), float(new_q))
            self._journal({"e": "promotion", "id": promo_id, "run": run_id,
                           "old_ref": old_ref, "new_ref": new_ref,
                           "old_q": float(old_q), "new_q": float(new_q)})
            self._promotions[promo_id] = promo
        if self.auto_approve:
            return self.resolve_promotion(promo_id, "approved")
        return promo

    def resolve_promotion(self, promo_id: str, decision: str) -> PromotionRequest:
        if decision not in ("approved", "rejected"):
            raise ValueError(f"decision must be approved or rejected, got {decision!r}")
        with self._lock:
            promo = self._promotions.get(promo_id)
            if promo is None:
                raise NotFound(f"no promotion {promo_id!r}")
            if promo.decision != "pending":
                raise Conflict(f"promotion {promo_id!r} already {promo.decision}")
            self._journal({"e": "promotion_resolved", "id": promo_id, "decision": decision})
            promo.decision = decision
            if decision == "approved":
                self._active_model_ref = promo.new_model_ref
                self.ledger.add(promo.new_q - promo.old_q, promo.run_id)
            return promo

    def list_promotions(self, decision: str | None = None) -> list[PromotionRequest]:
        with self._lock:
            promos = list(self._promotions.values())
            if decision:
                promos = [p for p in promos if p.decision == decision]
            return sorted(promos, key=lambda p: p.promo_id)

    def get_promotion(self, promo_id: str) -> PromotionRequest:
        with self._lock:
            promo = self._promotions.get(promo_id)
            if promo is None:
                raise NotFound(f"no promotion {promo_id!r}")
            return promo

    @property
    def active_model_ref(self) -> str | None:
        return self._active_model_ref


class FeedbackClient:
    """HTTP client for the feedback endpoints; raises the same exception types
    the in-process service does."""

    _ERRORS = {
        "NotFound": NotFound,
        "Conflict": Conflict,
        "DuplicateBatch": DuplicateBatch,
        "Incomplete": Incomplete,
        "InvalidLabel": InvalidLabel,
        "InvalidSpec": InvalidSpec,
        "NotAnImprovement": NotAnImprovement,
        "EmptyCriticalSet": EmptyCriticalSet,
    }

    def __init__(self, endpoint: str, timeout: float = 10.0):
        from .tracker import TrackerClient

        self._http = TrackerClient(endpoint, timeout)

    def _call(self, method: str, path: str, payload=None):
        import urllib.error

        body = json.dumps(payload).encode() if payload is not None else None
        try:
            raw = self._http._request(method, path, body)
        except urllib.error.HTTPError as err:
            detail = err.read().decode(errors="replace")
            try:
                parsed = json.loads(detail)
            except json.JSONDecodeError:
                parsed = {"error": "", "message": detail}
            exc = self._ERRORS.get(parsed.get("error"))
            if exc is Incomplete:
                raise Incomplete(parsed.get("message", detail),
                                 unresolved=parsed.get("unresolved", 0)) from None
            if exc is not None:
                raise exc(parsed.get("message", detail)) from None
            raise
        return json.loads(raw) if raw else None

    def enqueue_labeling(self, samples: np.ndarray, indices, run_id: str) -> list[dict]:
        payload = {"samples": _encode_array(np.asarray(samples)),
                   "indices": [int(i) for i in indices]}
        return self._call("PUT", f"/runs/{run_id}/label-tasks", payload)["tasks"]

    def get_label_tasks(self, run_id: str, status: str | None = None) -> list[dict]:
        qs = f"?status={status}" if status else ""
        return self._call("GET", f"/runs/{run_id}/label-tasks{qs}")["tasks"]

    def submit_label(self, task_id: str, label: int) -> dict:
        return self._call("POST", f"/label-tasks/{task_id}", {"label": int(label)})

    def skip_label(self, task_id: str) -> dict:
        return self._call("POST", f"/label-tasks/{task_id}", {"skip": True})

    def enqueue_finding(self, samples: np.ndarray, indices, x_train: np.ndarray,
                        run_id: str, pool_size: int = 8) -> list[dict]:
        payload = {
            "samples": _encode_array(np.asarray(samples)),
            "indices": [int(i) for i in indices],
            "x_train": _encode_array(np.asarray(x_train)),
            "pool_size": pool_size,
        }
        return self._call("PUT", f"/runs/{run_id}/find-tasks", payload)["tasks"]

    def get_find_tasks(self, run_id: str, status: str | None = None) -> list[dict]:
        qs = f"?status={status}" if status else ""
        return self._call("GET", f"/runs/{run_id}/find-tasks{qs}")["tasks"]

    def submit_match(self, task_id: str, match_index: int) -> dict:
        return self._call("POST", f"/find-tasks/{task_id}",
                          {"match_index": int(match_index)})

    def skip_find(self, task_id: str) -> dict:
        return self._call("POST", f"/find-tasks/{task_id}", {"skip": True})

    def collect_feedback(self, run_id: str, kind: str) -> dict:
        out = self._call("GET", f"/runs/{run_id}/feedback?kind={kind}")
        for item in out["items"]:
            item["sample"] = _decode_array(item["sample"])
        return out

    def request_promotion(self, old_ref: str, new_ref: str, old_q: float,
                          new_q: float, run_id: str = "") -> dict:
        return self._call("POST", "/promotions",
                          {"old_ref": old_ref, "new_ref": new_ref,
                           "old_q": old_q, "new_q": new_q, "run_id": run_id})

    def resolve_promotion(self, promo_id: str, decision: str) -> dict:
        return self._call("POST", f"/promotions/{promo_id}", {"decision": decision})

    def list_promotions(self, decision: str | None = None) -> list[dict]:
        qs = f"?decision={decision}" if decision else ""
        return self._call("GET", f"/promotions{qs}")["promotions"]

    def active_model_ref(self) -> str | None:
        return self._call("GET", "/active-model")["ref"]

    def ledger_total(self) -> float:
        return float(self._call("GET", "/ledger")["total"])
