"""HTTP study service: serves presentation plans and stimulus frame bundles,
collects ratings into an append-only CSV (the same format psychstats
ingests), and exports it.

Endpoints:
    GET  /api/plan?participant=ID               session plan JSON
    GET  /api/stimulus/{pair}/{speed}/manifest  sequence manifest JSON
    GET  /api/stimulus/{pair}/{speed}/frames/{n}  PNG frame
    POST /api/ratings                           rating JSON -> 201 / 400 / 409
    GET  /api/export.csv                        ratings CSV

Every accepted rating is flushed and fsynced before the 201 goes out. On
startup a torn final line (crash mid-append) is moved to a `.quarantine`
file next to the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import ValidationError
from .motionlab import MANIFEST_NAME
from .psychstats import CSV_COLUMNS, RatingRecord, StatsError, ingest_ratings, rating_row
from .study import PARTICIPANT_ID_RE, StudyConfig, make_plan

RATING_REQUIRED = (
    "participant_id", "pair_id", "speed", "presentation_index",
    "likability", "aesthetic_pleasantness", "artistic_value",
)
RATING_OPTIONAL = ("timestamp",)


class RatingsLog:
    """Crash-safe append-only ratings CSV with duplicate-cell tracking."""

    def __init__(self, path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self.cells = set()
        self._recover()

    def _recover(self):
        header = ",".join(CSV_COLUMNS) + "\r\n"
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(header, newline="")
            return
        raw = self.path.read_bytes()
        if not raw.endswith(b"\n"):
            cut = raw.rfind(b"\n") + 1
            torn = raw[cut:]
            with open(self.path.with_suffix(self.path.suffix + ".quarantine"), "ab") as qf:
                qf.write(torn + b"\n")
            with open(self.path, "wb") as fh:
                fh.write(raw[:cut])
        result = ingest_ratings(self.path)
        self.cells = {r.cell for r in result.records}

    def append(self, record: RatingRecord) -> bool:
        """Durably append one record; False if its cell already exists."""
        with self.lock:
            if record.cell in self.cells:
                return False
            buf = io.StringIO()
            csv.writer(buf).writerow(rating_row(record))
            with open(self.path, "a", newline="") as fh:
                fh.write(buf.getvalue())
                fh.flush()
                os.fsync(fh.fileno())
            self.cells.add(record.cell)
            return True


class StudyService:
    def __init__(self, config: StudyConfig, validate_stimuli: bool = True):
        if validate_stimuli:
            config.validate_stimuli()
        self.config = config
        self.log = RatingsLog(config.ratings_path)

    def make_server(self, host: str | None = None, port: int | None = None) -> ThreadingHTTPServer:
        service = self

        class Handler(_StudyHandler):
            pass

        Handler.service = service
        address = (host or self.config.host, self.config.port if port is None else port)
        return ThreadingHTTPServer(address, Handler)

    def serve_forever(self, host=None, port=None):
        server = self.make_server(host, port)
        try:
            server.serve_forever()
        finally:
            server.server_close()


class _StudyHandler(BaseHTTPRequestHandler):
    service: StudyService
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    # -- plumbing ---------------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, payload: dict):
        self._send(status, json.dumps(payload).encode(), "application/json")

    def _error(self, status: int, reason: str):
        self._json(status, {"error": reason})

    # -- routes ------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if url.path == "/api/plan":
            return self._handle_plan(parse_qs(url.query))
        if len(parts) == 4 and parts[:2] == ["api", "stimulus"] and parts[3] == "manifest":
            return self._handle_manifest(parts[2], None)
        if len(parts) == 5 and parts[:2] == ["api", "stimulus"] and parts[4] == "manifest":
            return self._handle_manifest(parts[2], parts[3])
        if len(parts) == 6 and parts[:2] == ["api", "stimulus"] and parts[4] == "frames":
            return self._handle_frame(parts[2], parts[3], parts[5])
        if url.path == "/api/export.csv":
            body = self.service.log.path.read_bytes()
            return self._send(200, body, "text/csv")
        return self._handle_static(url.path)

    def _handle_plan(self, query):
        participant = (query.get("participant") or [""])[0]
        try:
            plan = make_plan(self.service.config.study_seed, participant)
        except ValidationError as exc:
            return self._error(400, str(exc))
        self._json(200, plan.to_dict())

    def _handle_manifest(self, pair, speed):
        if speed is None:
            return self._error(404, "manifest path is /api/stimulus/{pair}/{speed}/manifest")
        try:
            directory = self.service.config.sequence_dir(pair, speed)
        except ValidationError as exc:
            return self._error(404, str(exc))
        manifest = directory / MANIFEST_NAME
        if not manifest.exists():
            return self._error(404, f"no manifest for {pair}/{speed}")
        self._send(200, manifest.read_bytes(), "application/json")

    def _handle_frame(self, pair, speed, index):
        try:
            directory = self.service.config.sequence_dir(pair, speed)
            n = int(index)
        except (ValidationError, ValueError):
            return self._error(404, "unknown stimulus frame")
        frame = directory / f"frame_{n:06d}.png"
        if n < 0 or not frame.exists():
            return self._error(404, f"no frame {index} for {pair}/{speed}")
        self._send(200, frame.read_bytes(), "image/png")

    def _handle_static(self, path):
        ui_dir = self.service.config.ui_dir
        if not ui_dir:
            return self._error(404, f"unknown path {path}")
        root = Path(ui_dir).resolve()
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            return self._error(404, f"unknown path {path}")
        ctype = {
            ".html": "text/html", ".js": "application/javascript",
            ".css": "text/css", ".png": "image/png", ".map": "application/json",
        }.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)

    def do_POST(self):
        if urlparse(self.path).path != "/api/ratings":
            return self._error(404, f"unknown path {self.path}")
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            return self._error(400, "body is not valid JSON")
        if not isinstance(payload, dict):
            return self._error(400, "body must be a JSON object")

        unknown = set(payload) - set(RATING_REQUIRED) - set(RATING_OPTIONAL)
        if unknown:
            return self._error(400, f"unknown fields: {sorted(unknown)}")
        missing = set(RATING_REQUIRED) - set(payload)
        if missing:
            return self._error(400, f"missing fields: {sorted(missing)}")
        participant = payload["participant_id"]
        if not isinstance(participant, str) or not PARTICIPANT_ID_RE.match(participant):
            return self._error(400, "participant_id must match [A-Za-z0-9_-]+")
        idx = payload["presentation_index"]
        if not isinstance(idx, int) or not 0 <= idx <= 3:
            return self._error(400, "presentation_index must be an integer in 0..3")
        for dim in ("likability", "aesthetic_pleasantness", "artistic_value"):
            if not isinstance(payload[dim], int):
                return self._error(400, f"{dim} must be an integer")

        timestamp = payload.get("timestamp") or datetime.now(timezone.utc).isoformat()
        try:
            record = RatingRecord(
                participant_id=participant,
                pair_id=payload["pair_id"],
                speed=payload["speed"],
                presentation_index=idx,
                likability=payload["likability"],
                aesthetic_pleasantness=payload["aesthetic_pleasantness"],
                artistic_value=payload["artistic_value"],
                timestamp=timestamp,
            )
        except StatsError as exc:
            return self._error(400, str(exc))
        if not self.service.log.append(record):
            return self._error(409, f"duplicate rating for cell {record.cell}")
        self._json(201, {"status": "created"})
