"""Local HTTP endpoint backing the marker-picker UI.

Serves the reference mesh frame and the current marker mapping, accepts
validated mapping updates (persisted atomically), and answers symmetry
mirror queries. Requests are handled sequentially, so mapping writes are
serialized by construction. Binds localhost by default: this is a desk
tool, not a service.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

from .errors import MappingError
from .trcio import marker_map_to_dict, save_marker_map
from .twin import MarkerMap, MeshSequence, mirror_bindings


class PickerState:
    """Mesh geometry plus the mutable, persisted marker mapping."""

    def __init__(self, mesh: MeshSequence, marker_map: MarkerMap, mapping_path: str | Path, frame: int = 0):
        if not (0 <= frame < mesh.num_frames):
            raise ValueError(f"reference frame {frame} out of range [0, {mesh.num_frames})")
        self.mesh = mesh
        self.frame = frame
        self.marker_map = marker_map
        self.mapping_path = Path(mapping_path)
        self.lock = threading.Lock()

    def mesh_payload(self) -> dict:
        verts = self.mesh.vertices[self.frame]
        faces = self.mesh.faces
        return {
            "vertices": verts.tolist(),
            "faces": [] if faces is None else faces.tolist(),
        }

    def markerset_payload(self) -> dict:
        mm = self.marker_map
        return {
            "marker_set": mm.marker_set_name,
            "markers": list(mm.marker_names),
            "anchors": list(mm.anchor_names),
            "symmetry_pairs": [list(p) for p in mm.symmetry_pairs],
        }

    def validate_update(self, payload: dict) -> tuple[MarkerMap | None, list[dict]]:
        """Build the replacement map from a PUT body; field errors on failure.

        The symmetry table is server-owned: the stored table always carries
        over, whatever the client sends.
        """
        errors: list[dict] = []
        markers = payload.get("markers")
        if not isinstance(markers, list) or not markers:
            return None, [{"field": "markers", "message": "expected a non-empty list"}]
        entries = []
        num_vertices = self.mesh.num_vertices
        for i, m in enumerate(markers):
            if not isinstance(m, dict) or "name" not in m:
                errors.append({"field": f"markers[{i}]", "message": "expected {name, vertex}"})
                continue
            vertex = m.get("vertex")
            if vertex is not None:
                if not isinstance(vertex, int):
                    errors.append({"field": f"markers[{i}].vertex", "message": "expected integer or null"})
                    continue
                if not (0 <= vertex < num_vertices):
                    errors.append(
                        {
                            "field": f"markers[{i}].vertex",
                            "message": f"vertex {vertex} out of range [0, {num_vertices})",
                        }
                    )
                    continue
            entries.append((str(m["name"]), vertex))
        if errors:
            return None, errors
        current = self.marker_map
        try:
            updated = MarkerMap(
                marker_set_name=payload.get("marker_set", current.marker_set_name),
                entries=tuple(entries),
                symmetry_pairs=tuple(
                    tuple(p) for p in payload.get("symmetry_pairs", current.symmetry_pairs)
                ),
                anchor_names=tuple(payload.get("anchors", current.anchor_names)),
                vertex_symmetry_table=current.vertex_symmetry_table,
                symmetry_table_ref=current.symmetry_table_ref,
            )
        except ValueError as exc:
            return None, [{"field": "markers", "message": str(exc)}]
        return updated, []

    def apply_update(self, updated: MarkerMap) -> None:
        with self.lock:
            save_marker_map(updated, self.mapping_path)
            self.marker_map = updated

    def mirror(self, payload: dict) -> tuple[dict | None, list[dict]]:
        raw = payload.get("entries")
        if not isinstance(raw, list):
            return None, [{"field": "entries", "message": "expected a list of {name, vertex}"}]
        side_entries = []
        for i, e in enumerate(raw):
            if not isinstance(e, dict) or "name" not in e or not isinstance(e.get("vertex"), int):
                return None, [{"field": f"entries[{i}]", "message": "expected {name, vertex:int}"}]
            side_entries.append((str(e["name"]), e["vertex"]))
        try:
            mirrored = mirror_bindings(self.marker_map, side_entries)
        except MappingError as exc:
            return None, [{"field": "entries", "message": str(exc)}]
        return {"entries": [{"name": n, "vertex": v} for n, v in mirrored]}, []


class PickerHandler(BaseHTTPRequestHandler):
    server: "PickerServer"

    def _send_json(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _read_json(self) -> dict | None:
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length) if length else b""
        try:
            parsed = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(400, {"errors": [{"field": "", "message": "request body is not valid JSON"}]})
            return None
        if not isinstance(parsed, dict):
            self._send_json(400, {"errors": [{"field": "", "message": "expected a JSON object"}]})
            return None
        return parsed

    def do_GET(self):
        state = self.server.state
        if self.path == "/api/mesh":
            self._send_json(200, state.mesh_payload())
        elif self.path == "/api/markerset":
            self._send_json(200, state.markerset_payload())
        elif self.path == "/api/mapping":
            self._send_json(200, marker_map_to_dict(state.marker_map))
        elif self.path.startswith("/api/"):
            self._send_json(404, {"errors": [{"field": "", "message": f"no such endpoint {self.path}"}]})
        else:
            self._serve_static()

    def do_PUT(self):
        if self.path != "/api/mapping":
            self._send_json(404, {"errors": [{"field": "", "message": f"no such endpoint {self.path}"}]})
            return
        payload = self._read_json()
        if payload is None:
            return
        state = self.server.state
        updated, errors = state.validate_update(payload)
        if errors:
            self._send_json(422, {"errors": errors})
            return
        state.apply_update(updated)
        self._send_json(200, marker_map_to_dict(state.marker_map))

    def do_POST(self):
        if self.path != "/api/mirror":
            self._send_json(404, {"errors": [{"field": "", "message": f"no such endpoint {self.path}"}]})
            return
        payload = self._read_json()
        if payload is None:
            return
        result, errors = self.server.state.mirror(payload)
        if errors:
            self._send_json(422, {"errors": errors})
            return
        self._send_json(200, result)

    def _serve_static(self):
        ui_dir = self.server.ui_dir
        if ui_dir is None:
            self._send_json(404, {"errors": [{"field": "", "message": "no UI directory configured"}]})
            return
        rel = self.path.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self.send_response(404)
            self.end_headers()
            return
        content_types = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".mjs": "text/javascript",
            ".css": "text/css",
            ".json": "application/json",
            ".png": "image/png",
        }
        blob = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, fmt, *args):
        if self.server.verbose:
            super().log_message(fmt, *args)


class PickerServer(HTTPServer):
    def __init__(self, address, state: PickerState, ui_dir: str | Path | None = None, verbose: bool = False):
        self.state = state
        self.ui_dir = None if ui_dir is None else Path(ui_dir)
        self.verbose = verbose
        super().__init__(address, PickerHandler)


def make_server(
    mesh: MeshSequence,
    marker_map: MarkerMap,
    mapping_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 0,
    frame: int = 0,
    ui_dir: str | Path | None = None,
    verbose: bool = False,
) -> PickerServer:
    state = PickerState(mesh, marker_map, mapping_path, frame=frame)
    return PickerServer((host, port), state, ui_dir=ui_dir, verbose=verbose)
