"""Readers and writers: TRC trajectories, motion tables, and JSON configs.

TRC output is the established OpenSim tab-delimited layout with 5 decimal
places; motion files carry 8 significant digits. Writers emit LF and are
byte-deterministic; parsers accept LF and CRLF and report a line or field
locator in every error.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError, SchemaError
from .geom import Box2
from .prompt import Detection, VisualPrompt
from .twin import CameraExtrinsics, MarkerMap, MarkerTrajectory, MeshSequence

TRC_HEADER_FIELDS = (
    "DataRate",
    "CameraRate",
    "NumFrames",
    "NumMarkers",
    "Units",
    "OrigDataRate",
    "OrigDataStartFrame",
    "OrigNumFrames",
)

# Self-contained JSON meshes are a test convenience, not a data path.
MAX_INLINE_VERTICES = 1000


@dataclass(frozen=True)
class TrcHeader:
    data_rate: float
    camera_rate: float
    num_frames: int
    num_markers: int
    units: str
    orig_data_rate: float
    orig_data_start_frame: int
    orig_num_frames: int
    path_file_type: int = 4
    coordinate_tag: str = "(X/Y/Z)"

    def __post_init__(self):
        if self.num_frames < 1 or self.num_markers < 1:
            raise ValueError("TRC needs at least one frame and one marker")
        if self.data_rate <= 0 or self.camera_rate <= 0 or self.orig_data_rate <= 0:
            raise ValueError("TRC rates must be positive")
        if self.units not in ("m", "mm"):
            raise ValueError(f"unsupported TRC units {self.units!r}")


@dataclass(frozen=True)
class MotionTable:
    """Time column plus generalized coordinates, one row per frame."""

    column_names: tuple[str, ...]
    data: np.ndarray  # (T, 1 + Q), column 0 is time
    in_degrees: bool = True
    name: str = "motion"

    def __post_init__(self):
        cols = tuple(str(c) for c in self.column_names)
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {data.shape}")
        if len(cols) != data.shape[1]:
            raise ValueError(f"{len(cols)} column names for {data.shape[1]} columns")
        if not cols or cols[0] != "time":
            raise ValueError("first column must be 'time'")
        if not np.all(np.isfinite(data)):
            raise ValueError("motion table contains non-finite values")
        if data.shape[0] > 1 and np.any(np.diff(data[:, 0]) <= 0):
            raise ValueError("time column must be strictly increasing")
        data.flags.writeable = False
        object.__setattr__(self, "column_names", cols)
        object.__setattr__(self, "data", data)

    @property
    def num_rows(self) -> int:
        return self.data.shape[0]


def _fmt_rate(x: float) -> str:
    return f"{x:g}"


# ---------------------------------------------------------------------------
# TRC


def write_trc(traj: MarkerTrajectory, sink: BinaryIO, name: str = "trajectory.trc") -> None:
    """Write a marker trajectory as a tab-delimited TRC byte stream.

    Layout: PathFileType line, header field names, header values, the
    Frame#/Time/marker-name row (each name followed by two empty cells),
    the X1 Y1 Z1 ... component row, a blank line, then one row per frame
    with 1-based frame index, time = (frame-1)/rate, and coordinates, all
    numeric cells at 5 decimal places.
    """
    header = TrcHeader(
        data_rate=traj.frame_rate_hz,
        camera_rate=traj.frame_rate_hz,
        num_frames=traj.num_frames,
        num_markers=traj.num_markers,
        units=traj.units,
        orig_data_rate=traj.frame_rate_hz,
        orig_data_start_frame=traj.start_frame,
        orig_num_frames=traj.num_frames,
    )
    lines = [
        f"PathFileType\t{header.path_file_type}\t{header.coordinate_tag}\t{name}",
        "\t".join(TRC_HEADER_FIELDS),
        "\t".join(
            [
                _fmt_rate(header.data_rate),
                _fmt_rate(header.camera_rate),
                str(header.num_frames),
                str(header.num_markers),
                header.units,
                _fmt_rate(header.orig_data_rate),
                str(header.orig_data_start_frame),
                str(header.orig_num_frames),
            ]
        ),
    ]
    name_cells = ["Frame#", "Time"]
    for marker in traj.marker_names:
        name_cells += [marker, "", ""]
    lines.append("\t".join(name_cells))
    comp_cells = ["", ""]
    for i in range(traj.num_markers):
        comp_cells += [f"X{i + 1}", f"Y{i + 1}", f"Z{i + 1}"]
    lines.append("\t".join(comp_cells))
    lines.append("")

    rate = traj.frame_rate_hz
    for t in range(traj.num_frames):
        row = [str(t + 1), f"{t / rate:.5f}"]
        row += [f"{v:.5f}" for v in traj.positions[t].reshape(-1)]
        lines.append("\t".join(row))
    sink.write(("\n".join(lines) + "\n").encode("ascii"))


def save_trc(traj: MarkerTrajectory, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        write_trc(traj, f, name=path.name)


def _numeric(cell: str, line_no: int, what: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise FormatError(f"line {line_no}: non-numeric {what} {cell!r}") from None


def parse_trc(source: BinaryIO) -> MarkerTrajectory:
    """Parse a TRC byte stream, validating header counts against the body."""
    text = source.read().decode("utf-8", errors="replace")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if len(lines) < 6:
        raise FormatError("line 1: file too short to be a TRC")
    if not lines[0].startswith("PathFileType"):
        raise FormatError("line 1: expected 'PathFileType' header")

    field_names = lines[1].rstrip("\n").split("\t")
    field_values = lines[2].rstrip("\n").split("\t")
    fields = dict(zip(field_names, field_values))
    for required in ("DataRate", "NumFrames", "NumMarkers", "Units"):
        if required not in fields or fields[required] == "":
            raise FormatError(f"line 2: missing header field {required!r}")
    units = fields["Units"]
    if units not in ("m", "mm"):
        raise FormatError(f"line 3: unsupported units tag {units!r}")
    data_rate = _numeric(fields["DataRate"], 3, "DataRate")
    declared_frames = int(_numeric(fields["NumFrames"], 3, "NumFrames"))
    declared_markers = int(_numeric(fields["NumMarkers"], 3, "NumMarkers"))
    start_frame = int(_numeric(fields.get("OrigDataStartFrame", "1") or "1", 3, "OrigDataStartFrame"))

    name_cells = lines[3].split("\t")
    marker_names = [c for c in name_cells[2:] if c.strip()]
    if len(marker_names) != declared_markers:
        raise FormatError(
            f"line 4: header declares {declared_markers} markers but name row has {len(marker_names)}"
        )

    rows: list[list[float]] = []
    for line_no, line in enumerate(lines[5:], start=6):
        if not line.strip():
            continue
        cells = line.split("\t")
        expected = 2 + 3 * declared_markers
        if len(cells) < expected:
            raise FormatError(
                f"line {line_no}: expected {expected} cells, got {len(cells)}"
            )
        _numeric(cells[0], line_no, "frame index")
        _numeric(cells[1], line_no, "time")
        rows.append([_numeric(c, line_no, "coordinate") for c in cells[2:expected]])
    if len(rows) != declared_frames:
        raise FormatError(
            f"line 3: header declares {declared_frames} frames but data block has {len(rows)} rows"
        )
    positions = np.array(rows, dtype=np.float64).reshape(declared_frames, declared_markers, 3)
    return MarkerTrajectory(
        marker_names=tuple(marker_names),
        positions=positions,
        frame_rate_hz=data_rate,
        units=units,
        start_frame=start_frame,
    )


def load_trc(path: str | Path) -> MarkerTrajectory:
    with open(path, "rb") as f:
        return parse_trc(f)


# ---------------------------------------------------------------------------
# Motion files


def write_motion(table: MotionTable, sink: BinaryIO) -> None:
    """Write a motion table: name line, nRows/nColumns, inDegrees, endheader,
    column names, then data rows at 8 significant digits."""
    lines = [
        table.name,
        f"nRows={table.num_rows}",
        f"nColumns={len(table.column_names)}",
        f"inDegrees={'yes' if table.in_degrees else 'no'}",
        "endheader",
        "\t".join(table.column_names),
    ]
    for row in table.data:
        lines.append("\t".join(f"{v:.8g}" for v in row))
    sink.write(("\n".join(lines) + "\n").encode("ascii"))


def save_motion(table: MotionTable, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_motion(table, f)


def parse_motion(source: BinaryIO) -> MotionTable:
    """Parse a motion byte stream written by write_motion."""
    text = source.read().decode("utf-8", errors="replace")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if not lines or not lines[0].strip():
        raise FormatError("line 1: missing motion name line")
    name = lines[0].strip()
    meta: dict[str, str] = {}
    body_start = None
    for line_no, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if stripped == "endheader":
            body_start = line_no  # 1-based index of endheader line
            break
        if "=" in stripped:
            key, _, value = stripped.partition("=")
            meta[key.strip()] = value.strip()
    if body_start is None:
        raise FormatError("line 2: no 'endheader' line found")
    in_degrees_tag = meta.get("inDegrees", "yes").lower()
    if in_degrees_tag not in ("yes", "no"):
        raise FormatError(f"line {body_start - 1}: inDegrees must be yes or no")

    column_line_no = body_start + 1
    if column_line_no > len(lines) or not lines[column_line_no - 1].strip():
        raise FormatError(f"line {column_line_no}: missing column-name row")
    columns = lines[column_line_no - 1].rstrip("\n").split("\t")

    rows = []
    for line_no, line in enumerate(lines[column_line_no:], start=column_line_no + 1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(columns):
            raise FormatError(
                f"line {line_no}: expected {len(columns)} cells, got {len(cells)}"
            )
        rows.append([_numeric(c, line_no, "value") for c in cells])
    if "nRows" in meta and int(meta["nRows"]) != len(rows):
        raise FormatError(
            f"line 2: header declares nRows={meta['nRows']} but body has {len(rows)} rows"
        )
    if "nColumns" in meta and int(meta["nColumns"]) != len(columns):
        raise FormatError(
            f"line 3: header declares nColumns={meta['nColumns']} but body has {len(columns)}"
        )
    return MotionTable(
        column_names=tuple(columns),
        data=np.array(rows, dtype=np.float64),
        in_degrees=in_degrees_tag == "yes",
        name=name,
    )


def load_motion(path: str | Path) -> MotionTable:
    with open(path, "rb") as f:
        return parse_motion(f)


# ---------------------------------------------------------------------------
# JSON configs


def _load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def _field(data: dict, key: str, where: str):
    if key not in data:
        raise SchemaError(f"{where}.{key}: missing required field")
    return data[key]


def load_mesh_sequence(manifest_path: str | Path) -> MeshSequence:
    """Load a mesh sequence manifest plus its f32 binary (or inline arrays)."""
    manifest_path = Path(manifest_path)
    data = _load_json(manifest_path)
    where = manifest_path.name
    num_frames = int(_field(data, "num_frames", where))
    num_vertices = int(_field(data, "num_vertices", where))
    rate = float(_field(data, "frame_rate_hz", where))
    units = data.get("units", "m")
    if units not in ("m", "mm"):
        raise SchemaError(f"{where}.units: expected 'm' or 'mm', got {units!r}")

    if "data" in data:
        blob_path = manifest_path.parent / data["data"]
        blob = blob_path.read_bytes()
        expected = num_frames * num_vertices * 3 * 4
        if len(blob) != expected:
            raise SchemaError(
                f"{where}.data: {blob_path.name} is {len(blob)} bytes, expected "
                f"{expected} (= {num_frames}*{num_vertices}*3*4)"
            )
        vertices = (
            np.frombuffer(blob, dtype="<f4")
            .astype(np.float64)
            .reshape(num_frames, num_vertices, 3)
        )
    elif "vertices" in data:
        if num_vertices > MAX_INLINE_VERTICES:
            raise SchemaError(
                f"{where}.vertices: inline meshes are capped at {MAX_INLINE_VERTICES} vertices"
            )
        vertices = np.asarray(data["vertices"], dtype=np.float64)
        if vertices.shape != (num_frames, num_vertices, 3):
            raise SchemaError(
                f"{where}.vertices: shape {vertices.shape} does not match manifest counts"
            )
    else:
        raise SchemaError(f"{where}: need either 'data' (binary path) or 'vertices' (inline)")
    if not np.all(np.isfinite(vertices)):
        raise SchemaError(f"{where}: mesh contains non-finite coordinates")
    if units == "mm":
        vertices = vertices / 1000.0

    faces = None
    if "faces" in data and data["faces"] is not None:
        raw = data["faces"]
        if isinstance(raw, str):
            face_blob = (manifest_path.parent / raw).read_bytes()
            if len(face_blob) % 12 != 0:
                raise SchemaError(f"{where}.faces: binary length not a multiple of 12")
            faces = np.frombuffer(face_blob, dtype="<u4").astype(np.int64).reshape(-1, 3)
        else:
            faces = np.asarray(raw, dtype=np.int64)
    try:
        return MeshSequence(vertices=vertices, frame_rate_hz=rate, faces=faces)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_marker_map(path: str | Path) -> MarkerMap:
    """Load a marker map JSON; a symmetry_table path is resolved relatively."""
    path = Path(path)
    data = _load_json(path)
    where = path.name
    markers = _field(data, "markers", where)
    if not isinstance(markers, list) or not markers:
        raise SchemaError(f"{where}.markers: expected a non-empty list")
    entries = []
    for i, m in enumerate(markers):
        name = _field(m, "name", f"{where}.markers[{i}]")
        vertex = m.get("vertex")
        if vertex is not None and not isinstance(vertex, int):
            raise SchemaError(f"{where}.markers[{i}].vertex: expected integer or null")
        entries.append((name, vertex))
    pairs = tuple(tuple(p) for p in data.get("symmetry_pairs", []))
    for i, p in enumerate(pairs):
        if len(p) != 2:
            raise SchemaError(f"{where}.symmetry_pairs[{i}]: expected a [right, left] pair")
    anchors = tuple(data.get("anchors", []))

    table = None
    table_ref = None
    raw_table = data.get("symmetry_table")
    if isinstance(raw_table, str):
        table_ref = raw_table
        blob = (path.parent / raw_table).read_bytes()
        if len(blob) % 4 != 0:
            raise SchemaError(f"{where}.symmetry_table: binary length not a multiple of 4")
        table = np.frombuffer(blob, dtype="<u4").astype(np.int64)
    elif raw_table is not None:
        table = np.asarray(raw_table, dtype=np.int64)

    try:
        return MarkerMap(
            marker_set_name=data.get("marker_set", path.stem),
            entries=tuple(entries),
            symmetry_pairs=pairs,
            anchor_names=anchors,
            vertex_symmetry_table=table,
            symmetry_table_ref=table_ref,
        )
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def marker_map_to_dict(marker_map: MarkerMap) -> dict:
    out: dict = {
        "marker_set": marker_map.marker_set_name,
        "markers": [
            {"name": name, "vertex": idx} for name, idx in marker_map.entries
        ],
        "symmetry_pairs": [list(p) for p in marker_map.symmetry_pairs],
        "anchors": list(marker_map.anchor_names),
    }
    if marker_map.symmetry_table_ref is not None:
        out["symmetry_table"] = marker_map.symmetry_table_ref
    elif marker_map.vertex_symmetry_table is not None:
        out["symmetry_table"] = marker_map.vertex_symmetry_table.tolist()
    return out


def save_marker_map(marker_map: MarkerMap, path: str | Path) -> None:
    """Atomically persist a marker map (write temp file, then rename)."""
    path = Path(path)
    payload = json.dumps(marker_map_to_dict(marker_map), indent=2) + "\n"
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_extrinsics(path: str | Path) -> CameraExtrinsics:
    """Load camera extrinsics; t_mm is converted to meters at ingest."""
    path = Path(path)
    data = _load_json(path)
    where = path.name
    rot = np.asarray(_field(data, "R", where), dtype=np.float64)
    if rot.shape != (3, 3):
        raise SchemaError(f"{where}.R: expected a 3x3 matrix, got shape {rot.shape}")
    t_mm = np.asarray(_field(data, "t_mm", where), dtype=np.float64).reshape(-1)
    if t_mm.shape != (3,):
        raise SchemaError(f"{where}.t_mm: expected 3 components")
    height = _field(data, "subject_height_m", where)
    predicted = data.get("predicted_height_m")
    try:
        return CameraExtrinsics(
            rotation=rot,
            translation_m=t_mm / 1000.0,
            subject_height_m=float(height),
            predicted_height_m=None if predicted is None else float(predicted),
            meta={"t_source_units": "mm"},
        )
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_detections(path: str | Path) -> tuple[str, list[Detection]]:
    """Load a detections file: image id plus (box, score) records."""
    path = Path(path)
    data = _load_json(path)
    where = path.name
    image = str(data.get("image", ""))
    raw = _field(data, "detections", where)
    if not isinstance(raw, list):
        raise SchemaError(f"{where}.detections: expected a list")
    detections = []
    for i, d in enumerate(raw):
        box = _field(d, "box", f"{where}.detections[{i}]")
        score = _field(d, "score", f"{where}.detections[{i}]")
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            raise SchemaError(f"{where}.detections[{i}].box: expected [x_min, y_min, x_max, y_max]")
        try:
            detections.append(Detection(box=Box2(*[float(v) for v in box]), score=float(score)))
        except ValueError as exc:
            raise SchemaError(f"{where}.detections[{i}]: {exc}") from None
    return image, detections


def prompts_to_dict(prompts: list[VisualPrompt]) -> dict:
    return {
        "prompts": [
            {
                "box": [p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max],
                "box_label": p.box_label,
                "point": [p.point[0], p.point[1]],
                "point_label": p.point_label,
            }
            for p in prompts
        ]
    }


def save_prompts(prompts: list[VisualPrompt], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(prompts_to_dict(prompts), indent=2) + "\n")
