"""HTTP label service: serves segment outlines, the CHM, and machine
predictions to a browser annotation tool, and records human labels in an
append-only JSONL journal.

The journal is the source of truth; the folded view (last write per segment
wins) backs the CSV export. Writes go through a read/append/replace cycle
behind a lock so the file on disk is always a complete, valid journal.
"""
from __future__ import annotations

import io
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import SPECIES_CODES, SPECIES_NAMES
from .ingest import AsciiGrid, grid_to_text

EXPORT_HEADER = "segment_id,species_code,status,annotator,timestamp,note"
STATUSES = ("proposed", "verified")
UNKNOWN_CODE = 0  # species_code 0 = unknown / skip


def _iso_utc(timestamp: Union[None, float, str]) -> str:
    """UTC ISO-8601 with a Z suffix; floats are Unix seconds, strings pass
    through untouched (already formatted)."""
    if isinstance(timestamp, str):
        return timestamp
    if timestamp is None:
        dt = datetime.now(timezone.utc)
    else:
        dt = datetime.fromtimestamp(float(timestamp), timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


class LabelStore:
    """Append-only JSONL journal of label events."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: list[dict] = []
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._entries.append(json.loads(line))

    def add(self, segment_id: int, species_code: int, annotator: str = "",
            note: str = "", status: str = "proposed",
            timestamp: Union[None, float, str] = None) -> dict:
        entry = {
            "seq": len(self._entries) + 1,
            "segment_id": int(segment_id),
            "species_code": int(species_code),
            "status": status,
            "annotator": annotator,
            "note": note,
            "timestamp": _iso_utc(timestamp),
        }
        with self._lock:
            entry["seq"] = len(self._entries) + 1
            self._entries.append(entry)
            tmp = self.path.with_suffix(".jsonl.tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                for e in self._entries:
                    f.write(json.dumps(e, sort_keys=True) + "\n")
            os.replace(tmp, self.path)
        return entry

    def entries(self) -> list[dict]:
        with self._lock:
            return list(self._entries)

    def folded(self) -> dict[int, dict]:
        """Latest entry per segment (journal order = arrival order)."""
        out: dict[int, dict] = {}
        for e in self.entries():
            out[e["segment_id"]] = e
        return out

    def export_csv(self) -> str:
        folded = self.folded()
        buf = [EXPORT_HEADER]
        for sid in sorted(folded):
            e = folded[sid]
            note = e.get("note", "").replace(",", ";").replace("\n", " ")
            annot = e.get("annotator", "").replace(",", ";")
            buf.append(f"{sid},{e['species_code']},{e.get('status', 'proposed')},"
                       f"{annot},{e['timestamp']},{note}")
        return "\n".join(buf) + "\n"


@dataclass
class ServeProject:
    """Everything the annotation endpoints serve."""

    geojson: dict
    chm: Optional[AsciiGrid] = None
    predictions: Optional[dict[int, tuple[int, np.ndarray]]] = None  # sid -> (code, p1..p9)
    store: LabelStore = None
    static_dir: Optional[Path] = None

    def segment_ids(self) -> list[int]:
        return [f["properties"]["segment_id"] for f in self.geojson["features"]]


def enriched_geojson(project: ServeProject) -> dict:
    """Feature collection with live label state and model output merged into
    each feature's properties."""
    folded = project.store.folded() if project.store else {}
    features = []
    for f in project.geojson["features"]:
        sid = f["properties"]["segment_id"]
        props = dict(f["properties"])
        if project.predictions and sid in project.predictions:
            code, proba = project.predictions[sid]
            props["predicted_code"] = int(code)
            props["disagreement"] = float(1.0 - np.max(proba))
        if sid in folded:
            props["label_code"] = folded[sid]["species_code"]
            props["label_status"] = folded[sid].get("status", "proposed")
        features.append({"type": "Feature", "properties": props,
                         "geometry": f["geometry"]})
    return {"type": "FeatureCollection", "features": features}


def progress_doc(project: ServeProject) -> dict:
    folded = project.store.folded() if project.store else {}
    sids = project.segment_ids()
    by_species = {str(c): 0 for c in (UNKNOWN_CODE,) + tuple(SPECIES_CODES)}
    by_status = {s: 0 for s in STATUSES}
    for e in folded.values():
        key = str(e["species_code"])
        if key in by_species:
            by_species[key] += 1
        status = e.get("status", "proposed")
        if status in by_status:
            by_status[status] += 1
    return {
        "n_segments": len(sids),
        "n_labeled": len([s for s in sids if s in folded]),
        "by_species": by_species,
        "by_status": by_status,
        "species": {str(c): n for c, n in zip(SPECIES_CODES, SPECIES_NAMES)},
    }


def _basemap_png(chm: AsciiGrid) -> bytes:
    from PIL import Image

    v = chm.values.astype(np.float64)
    vmax = v.max() if v.max() > 0 else 1.0
    img = np.clip(v / vmax * 255.0, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


_FALLBACK_PAGE = """<!doctype html>
<meta charset="utf-8"><title>label service</title>
<h1>Label service</h1>
<p>No static UI is installed. API endpoints:</p>
<ul>
<li>GET /api/segments</li><li>GET /api/chm.grid</li>
<li>GET /api/basemap.png</li><li>GET /api/labels.csv</li>
<li>GET /api/progress</li><li>POST /api/labels</li>
</ul>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class _Handler(BaseHTTPRequestHandler):
    # quiet by default; tests and the CLI opt into stderr noise explicitly
    def log_message(self, fmt, *args):
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    @property
    def project(self) -> ServeProject:
        return self.server.project

    def _send(self, status: int, body: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj, sort_keys=True).encode("utf-8"),
                   "application/json; charset=utf-8")

    def _static(self, rel: str) -> None:
        root = self.project.static_dir
        if root is None:
            if rel in ("", "index.html"):
                self._send(200, _FALLBACK_PAGE.encode("utf-8"),
                           "text/html; charset=utf-8")
            else:
                self._json(404, {"error": "not found"})
            return
        target = (root / (rel or "index.html")).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._json(404, {"error": "not found"})
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)

    def do_GET(self):  # noqa: N802 (http.server API)
        path = self.path.split("?")[0]
        if path == "/api/segments":
            self._json(200, enriched_geojson(self.project))
        elif path == "/api/progress":
            self._json(200, progress_doc(self.project))
        elif path == "/api/labels.csv":
            if self.project.store is None:
                self._json(404, {"error": "no label store"})
                return
            self._send(200, self.project.store.export_csv().encode("utf-8"),
                       "text/csv; charset=utf-8")
        elif path == "/api/chm.grid":
            if self.project.chm is None:
                self._json(404, {"error": "no chm loaded"})
                return
            if self.server._chm_text is None:
                self.server._chm_text = grid_to_text(self.project.chm).encode("utf-8")
            self._send(200, self.server._chm_text, "text/plain; charset=utf-8")
        elif path == "/api/basemap.png":
            if self.project.chm is None:
                self._json(404, {"error": "no chm loaded"})
                return
            if self.server._basemap is None:
                self.server._basemap = _basemap_png(self.project.chm)
            self._send(200, self.server._basemap, "image/png")
        elif path.startswith("/api/"):
            self._json(404, {"error": "not found"})
        else:
            self._static(path.lstrip("/"))

    def do_POST(self):  # noqa: N802
        path = self.path.split("?")[0]
        if path != "/api/labels":
            self._json(404, {"error": "not found"})
            return
        if self.project.store is None:
            self._json(400, {"error": "no label store"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._json(400, {"error": "body must be JSON"})
            return
        sid = doc.get("segment_id")
        code = doc.get("species_code")
        status = doc.get("status", "proposed")
        if not isinstance(sid, int) or isinstance(sid, bool):
            self._json(400, {"error": "segment_id must be an integer"})
            return
        if (not isinstance(code, int) or isinstance(code, bool)
                or (code != UNKNOWN_CODE and code not in SPECIES_CODES)):
            self._json(400, {"error": "species_code must be 0 (unknown) or one of 1..9"})
            return
        if status not in STATUSES:
            self._json(400, {"error": "status must be 'proposed' or 'verified'"})
            return
        if sid not in set(self.project.segment_ids()):
            self._json(400, {"error": f"unknown segment_id {sid}"})
            return
        entry = self.project.store.add(
            sid, code,
            annotator=str(doc.get("annotator", "")),
            note=str(doc.get("note", "")),
            status=status,
        )
        self._json(200, {"ok": True, "seq": entry["seq"]})


def make_server(project: ServeProject, host: str = "127.0.0.1",
                port: int = 8080, verbose: bool = False) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.project = project
    server.verbose = verbose
    server._chm_text = None
    server._basemap = None
    return server
