"""Append-only metadata and artifact store, plus the HTTP client nodes use.

On disk: runs/{run_id}/log.jsonl holds one JSON line per committed batch
(entries inside), so a batch lands all-or-nothing and a torn final line is
dropped on recovery. Artifacts are content-addressed files under artifacts/.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .errors import NotFound

logger = logging.getLogger(__name__)

ENTRY_KINDS = ("param", "metric", "tag", "artifact-ref")


@dataclass(frozen=True)
class MetadataEntry:
    run_id: str
    node_id: str
    key: str
    kind: str
    value: float | str
    timestamp: int

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "node_id": self.node_id,
            "key": self.key,
            "kind": self.kind,
            "value": self.value,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "MetadataEntry":
        return cls(raw["run_id"], raw["node_id"], raw["key"], raw["kind"],
                   raw["value"], raw["timestamp"])


@dataclass(frozen=True)
class TrackerQuery:
    run_id: str
    node_id: str | None = None
    key_prefix: str | None = None
    kind: str | None = None

    def __post_init__(self):
        if not self.run_id:
            raise ValueError("query needs a run_id")

    def matches(self, entry: MetadataEntry) -> bool:
        if self.node_id is not None and entry.node_id != self.node_id:
            return False
        if self.key_prefix is not None and not entry.key.startswith(self.key_prefix):
            return False
        if self.kind is not None and entry.kind != self.kind:
            return False
        return True


def process_metadata(raw: dict, run_id: str) -> dict:
    """Validate and normalize one raw entry before it is committed.

    Keys are trimmed; a missing kind is inferred from the value type.
    """
    key = str(raw.get("key", "")).strip()
    if not key:
        raise ValueError("metadata entry needs a nonempty key")
    value = raw.get("value")
    kind = raw.get("kind")
    if kind is None:
        kind = "metric" if isinstance(value, (int, float)) and not isinstance(value, bool) else "tag"
    if kind not in ENTRY_KINDS:
        raise ValueError(f"unknown metadata kind {kind!r}")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = float(value)
    else:
        value = str(value)
    return {
        "run_id": run_id,
        "node_id": str(raw.get("node_id", "")),
        "key": key,
        "kind": kind,
        "value": value,
    }


class TrackerStore:
    """Filesystem-backed store; safe for concurrent writers in one process."""

    def __init__(self, root: str | Path, endpoint: str = "local"):
        self.root = Path(root)
        self.endpoint = endpoint
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        (self.root / "artifacts").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._last_ts = 0

    # -- helpers ----------------------------------------------------------------

    def _run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def _next_timestamp(self) -> int:
        now = time.time_ns()
        self._last_ts = max(self._last_ts + 1, now)
        return self._last_ts

    def register_run(self, run_id: str, endpoint: str | None = None) -> None:
        run_dir = self._run_dir(run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        marker = run_dir / "endpoint"
        if not marker.exists():
            marker.write_text(endpoint or self.endpoint)

    def run_exists(self, run_id: str) -> bool:
        return self._run_dir(run_id).is_dir()

    def list_runs(self) -> list[str]:
        return sorted(p.name for p in (self.root / "runs").iterdir() if p.is_dir())

    # -- save / query -------------------------------------------------------------

    def save_metadata(self, entries: list[dict], run_id: str) -> bool:
        """Commit a batch atomically; True on success, False with a logged cause."""
        if not run_id:
            logger.warning("save_metadata rejected: empty run_id")
            return False
        try:
            processed = [process_metadata(e, run_id) for e in entries]
            with self._lock:
                self.register_run(run_id)
                for p in processed:
                    p["timestamp"] = self._next_timestamp()
                line = json.dumps({"batch": processed[0]["timestamp"] if processed else
                                   self._next_timestamp(),
                                   "entries": processed}) + "\n"
                fd = os.open(self._run_dir(run_id) / "log.jsonl",
                             os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
                try:
                    os.write(fd, line.encode())
                    os.fsync(fd)
                finally:
                    os.close(fd)
            return True
        except Exception:
            logger.exception("save_metadata failed for run %s", run_id)
            return False

    def _read_entries(self, run_id: str) -> list[MetadataEntry]:
        log = self._run_dir(run_id) / "log.jsonl"
        entries: list[MetadataEntry] = []
        if not log.exists():
            return entries
        raw = log.read_bytes().decode(errors="replace")
        for line in raw.split("\n"):
            if not line:
                continue
            try:
                batch = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line from an interrupted writer
            for e in batch.get("entries", ()):
                entries.append(MetadataEntry.from_json(e))
        return entries

    def gather_log(self, query: TrackerQuery) -> list[MetadataEntry]:
        if not self.run_exists(query.run_id):
            raise NotFound(f"run {query.run_id!r} is not registered")
        matched = [e for e in self._read_entries(query.run_id) if query.matches(e)]
        matched.sort(key=lambda e: e.timestamp)
        return matched

    def get_tracker_uri(self, run_id: str) -> str:
        marker = self._run_dir(run_id) / "endpoint"
        if not marker.exists():
            raise NotFound(f"run {run_id!r} is not registered")
        return marker.read_text()

    # -- artifacts -------------------------------------------------------------------

    def log_artifact(self, run_id: str, node_id: str, name: str, data: bytes) -> str:
        if not name:
            raise ValueError("artifact name must be nonempty")
        ref = hashlib.sha256(data).hexdigest()
        target = self.root / "artifacts" / ref
        if not target.exists():
            tmp = target.with_suffix(f".tmp-{os.getpid()}-{threading.get_ident()}")
            tmp.write_bytes(data)
            tmp.replace(target)
        self.save_metadata(
            [{"node_id": node_id, "key": name, "kind": "artifact-ref", "value": ref}],
            run_id,
        )
        return ref

    def get_artifact(self, ref: str) -> bytes:
        target = self.root / "artifacts" / ref
        if not target.exists():
            raise NotFound(f"no artifact {ref!r}")
        return target.read_bytes()


class TrackerClient:
    """Thin HTTP client for the tracker endpoints; mirrors TrackerStore's surface."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, body: bytes | None = None,
                 content_type: str = "application/json"):
        req = urllib.request.Request(self.endpoint + path, data=body, method=method)
        if body is not None:
            req.add_header("Content-Type", content_type)
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read()

    def _json(self, method: str, path: str, payload=None):
        body = json.dumps(payload).encode() if payload is not None else None
        try:
            data = self._request(method, path, body)
        except urllib.error.HTTPError as err:
            detail = err.read().decode(errors="replace")
            if err.code == 404:
                raise NotFound(detail) from None
            raise
        return json.loads(data) if data else None

    def health(self) -> bool:
        try:
            return bool(self._json("GET", "/health").get("ok"))
        except (urllib.error.URLError, OSError, ValueError):
            return False

    def save_metadata(self, entries: list[dict], run_id: str) -> bool:
        out = self._json("PUT", f"/runs/{urllib.parse.quote(run_id)}/metadata",
                         {"entries": entries})
        return out.get("flag") == "success"

    def gather_log(self, query: TrackerQuery) -> list[MetadataEntry]:
        params = {}
        if query.node_id is not None:
            params["node_id"] = query.node_id
        if query.key_prefix is not None:
            params["key_prefix"] = query.key_prefix
        if query.kind is not None:
            params["kind"] = query.kind
        qs = f"?{urllib.parse.urlencode(params)}" if params else ""
        out = self._json("GET", f"/runs/{urllib.parse.quote(query.run_id)}/metadata{qs}")
        return [MetadataEntry.from_json(e) for e in out["entries"]]

    def get_tracker_uri(self, run_id: str) -> str:
        out = self._json("GET", f"/runs/{urllib.parse.quote(run_id)}/uri")
        return out["endpoint"]

    def log_artifact(self, run_id: str, node_id: str, name: str, data: bytes) -> str:
        path = (f"/runs/{urllib.parse.quote(run_id)}/artifacts/{urllib.parse.quote(name)}"
                f"?node_id={urllib.parse.quote(node_id)}")
        try:
            raw = self._request("PUT", path, data, content_type="application/octet-stream")
        except urllib.error.HTTPError as err:
            raise NotFound(err.read().decode(errors="replace")) from None
        return json.loads(raw)["ref"]

    def get_artifact(self, ref: str) -> bytes:
        try:
            return self._request("GET", f"/artifacts/{urllib.parse.quote(ref)}")
        except urllib.error.HTTPError as err:
            if err.code == 404:
                raise NotFound(f"no artifact {ref!r}") from None
            raise
