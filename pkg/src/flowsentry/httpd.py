"""Minimal HTTP transport shared by the tracker and the feedback service.

Runs a threaded stdlib server on localhost. Handlers map package exceptions to
status codes; bodies are JSON except artifacts and PNG renderings.
"""

from __future__ import annotations

import io
import json
import re
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .errors import (
    Conflict,
    DuplicateBatch,
    EmptyCriticalSet,
    Incomplete,
    InvalidLabel,
    InvalidSpec,
    NotAnImprovement,
    NotFound,
)
from .feedback import FeedbackService
from .tracker import TrackerQuery, TrackerStore

_STATUS = {
    NotFound: 404,
    Conflict: 409,
    DuplicateBatch: 409,
    Incomplete: 409,
    InvalidLabel: 400,
    InvalidSpec: 400,
    NotAnImprovement: 400,
    EmptyCriticalSet: 400,
    ValueError: 400,
}


def render_png(image: np.ndarray) -> bytes:
    """Grayscale PNG of a [h, w] float image in [0, 1]."""
    from PIL import Image

    arr = (np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


class ServiceServer:
    """Tracker (+ optional feedback service, + optional static dir) over HTTP."""

    def __init__(self, store: TrackerStore, feedback: FeedbackService | None = None,
                 static_dir: str | Path | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.store = store
        self.feedback = feedback
        self.static_dir = Path(static_dir) if static_dir else None
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, code: int, body: bytes, content_type: str = "application/json"):
                self.send_response(code)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def _json(self, code: int, payload):
                self._send(code, json.dumps(payload).encode())

            def _body(self) -> bytes:
                length = int(self.headers.get("Content-Length") or 0)
                return self.rfile.read(length) if length else b""

            def _dispatch(self, method: str):
                parsed = urllib.parse.urlsplit(self.path)
                path = urllib.parse.unquote(parsed.path)
                params = dict(urllib.parse.parse_qsl(parsed.query))
                try:
                    handled = outer._route(method, path, params, self._body, self._send,
                                           self._json)
                except tuple(_STATUS) as err:
                    self._json(_STATUS[type(err)],
                               {"error": type(err).__name__, "message": str(err),
                                **({"unresolved": err.unresolved}
                                   if isinstance(err, Incomplete) else {})})
                    return
                except Exception as err:  # pragma: no cover - defensive
                    self._json(500, {"error": type(err).__name__, "message": str(err)})
                    return
                if not handled:
                    self._json(404, {"error": "NotFound", "message": f"no route {path}"})

            def do_GET(self):
                self._dispatch("GET")

            def do_PUT(self):
                self._dispatch("PUT")

            def do_POST(self):
                self._dispatch("POST")

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET,PUT,POST,OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------------

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ServiceServer":
        self.store.endpoint = self.endpoint
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ServiceServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- routing -------------------------------------------------------------------

    def _route(self, method, path, params, read_body, send, send_json) -> bool:
        if method == "GET" and path == "/health":
            send_json(200, {"ok": True})
            return True
        if self._route_tracker(method, path, params, read_body, send, send_json):
            return True
        if self.feedback is not None and self._route_feedback(
            method, path, params, read_body, send, send_json
        ):
            return True
        if self.static_dir and method == "GET" and self._route_static(path, send):
            return True
        return False

    def _route_tracker(self, method, path, params, read_body, send, send_json) -> bool:
        m = re.fullmatch(r"/runs/([^/]+)/metadata", path)
        if m:
            run_id = m.group(1)
            if method == "PUT":
                payload = json.loads(read_body() or b"{}")
                ok = self.store.save_metadata(payload.get("entries", []), run_id)
                send_json(200 if ok else 507,
                          {"flag": "success" if ok else "failure"})
                return True
            if method == "GET":
                query = TrackerQuery(run_id, params.get("node_id"),
                                     params.get("key_prefix"), params.get("kind"))
                entries = self.store.gather_log(query)
                send_json(200, {"entries": [e.to_json() for e in entries]})
                return True
        m = re.fullmatch(r"/runs/([^/]+)/uri", path)
        if m and method == "GET":
            send_json(200, {"endpoint": self.store.get_tracker_uri(m.group(1))})
            return True
        m = re.fullmatch(r"/runs/([^/]+)/artifacts/([^/]+)", path)
        if m and method == "PUT":
            ref = self.store.log_artifact(m.group(1), params.get("node_id", ""),
                                          m.group(2), read_body())
            send_json(200, {"ref": ref})
            return True
        m = re.fullmatch(r"/artifacts/([^/]+)", path)
        if m and method == "GET":
            send(200, self.store.get_artifact(m.group(1)), "application/octet-stream")
            return True
        return False

    def _route_feedback(self, method, path, params, read_body, send, send_json) -> bool:
        fb = self.feedback
        m = re.fullmatch(r"/runs/([^/]+)/label-tasks", path)
        if m:
            if method == "GET":
                tasks = fb.get_label_tasks(m.group(1), params.get("status"))
                send_json(200, {"tasks": [t.to_json(with_sample=False) for t in tasks]})
                return True
            if method == "PUT":
                payload = json.loads(read_body())
                report = _ReportView.from_json(payload)
                tasks = fb.enqueue_labeling(report, m.group(1))
                send_json(200, {"tasks": [t.to_json(with_sample=False) for t in tasks]})
                return True
        m = re.fullmatch(r"/label-tasks/(.+)/image\.png", path)
        if m and method == "GET":
            task = fb._label_task(m.group(1))
            send(200, render_png(task.sample), "image/png")
            return True
        m = re.fullmatch(r"/label-tasks/(.+)", path)
        if m and method == "POST":
            payload = json.loads(read_body())
            if payload.get("skip"):
                task = fb.skip_label(m.group(1))
            else:
                task = fb.submit_label(m.group(1), payload.get("label"))
            send_json(200, task.to_json(with_sample=False))
            return True
        m = re.fullmatch(r"/runs/([^/]+)/find-tasks", path)
        if m:
            if method == "GET":
                tasks = fb.get_find_tasks(m.group(1), params.get("status"))
                send_json(200, {"tasks": [t.to_json(with_sample=False) for t in tasks]})
                return True
            if method == "PUT":
                payload = json.loads(read_body())
                report = _ReportView.from_json(payload)
                x_train = _decode_train(payload)
                tasks = fb.enqueue_finding(report, x_train, m.group(1),
                                           int(payload.get("pool_size", 8)))
                send_json(200, {"tasks": [t.to_json(with_sample=False) for t in tasks]})
                return True
        m = re.fullmatch(r"/find-tasks/(.+)/image\.png", path)
        if m and method == "GET":
            task = fb._find_task(m.group(1))
            send(200, render_png(task.corrupted_sample), "image/png")
            return True
        m = re.fullmatch(r"/find-tasks/(.+)/candidates/(\d+)/image\.png", path)
        if m and method == "GET":
            task = fb._find_task(m.group(1))
            k = int(m.group(2))
            if k >= len(task.candidates):
                raise NotFound(f"candidate {k} out of range")
            send(200, render_png(task.candidates[k].sample), "image/png")
            return True
        m = re.fullmatch(r"/find-tasks/(.+)", path)
        if m and method == "POST":
            payload = json.loads(read_body())
            if payload.get("skip"):
                task = fb.skip_find(m.group(1))
            else:
                task = fb.submit_match(m.group(1), payload.get("match_index"))
            send_json(200, task.to_json(with_sample=False))
            return True
        m = re.fullmatch(r"/runs/([^/]+)/feedback", path)
        if m and method == "GET":
            batch = fb.collect_feedback(m.group(1), params.get("kind", "labels"))
            send_json(200, _batch_to_json(batch))
            return True
        if path == "/promotions":
            if method == "GET":
                promos = fb.list_promotions(params.get("decision"))
                send_json(200, {"promotions": [p.to_json() for p in promos]})
                return True
            if method == "POST":
                p = json.loads(read_body())
                promo = fb.request_promotion(p["old_ref"], p["new_ref"],
                                             float(p["old_q"]), float(p["new_q"]),
                                             p.get("run_id", ""))
                send_json(200, promo.to_json())
                return True
        m = re.fullmatch(r"/promotions/([^/]+)", path)
        if m and method == "POST":
            payload = json.loads(read_body())
            decision = "approved" if payload.get("approve") else (
                "rejected" if payload.get("reject") else payload.get("decision", ""))
            promo = fb.resolve_promotion(m.group(1), decision)
            send_json(200, promo.to_json())
            return True
        if path == "/active-model" and method == "GET":
            send_json(200, {"ref": fb.active_model_ref})
            return True
        if path == "/ledger" and method == "GET":
            from .graph import return_function

            send_json(200, {
                "entries": [{"delta": e.delta, "run_id": e.run_id}
                            for e in fb.ledger.entries],
                "total": return_function(fb.ledger),
            })
            return True
        return False

    def _route_static(self, path, send) -> bool:
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            return False
        kind = {"html": "text/html", "js": "text/javascript", "css": "text/css",
                "png": "image/png", "map": "application/json"}.get(
                    target.suffix.lstrip("."), "application/octet-stream")
        send(200, target.read_bytes(), kind)
        return True


class _ReportView:
    """Loose report shape accepted over the wire for enqueue calls."""

    def __init__(self, samples, indices):
        self.samples = samples
        self.indices = indices

    @classmethod
    def from_json(cls, payload: dict) -> "_ReportView":
        from .feedback import _decode_array

        samples = _decode_array(payload["samples"])
        indices = payload.get("indices") or list(range(len(samples)))
        return cls(samples, indices)


def _decode_train(payload: dict):
    from .feedback import _decode_array

    return _decode_array(payload["x_train"])


def _batch_to_json(batch) -> dict:
    from .feedback import _encode_array

    items = []
    for item in batch.items:
        if batch.kind == "labels":
            items.append({"origin_index": item.origin_index, "label": item.label,
                          "sample": _encode_array(item.sample)})
        else:
            items.append({"origin_index": item.origin_index,
                          "match_index": item.match_index,
                          "sample": _encode_array(item.corrupted_sample)})
    return {"kind": batch.kind, "run_id": batch.run_id, "items": items}
