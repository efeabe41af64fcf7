"""Biomechanical twin construction from mesh sequences.

Extracts named markers from fixed-topology vertex sequences, aligns meshes
to reference marker coordinates with an anchor Procrustes fit, normalizes
camera coordinates to a y-up world frame with a height-based scale, and
shifts the result so the lowest marker touches the ground.

All positions are meters internally; millimeter inputs are converted at
ingest (see trcio loaders).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import MappingError
from .geom import SimilarityTransform, apply_transform, as_points, is_rotation, umeyama_fit

UNIT_TAGS = ("m", "mm")


@dataclass(frozen=True)
class MeshSequence:
    """T frames of a fixed-topology vertex cloud, camera coordinates."""

    vertices: np.ndarray  # (T, V, 3) float64, meters
    frame_rate_hz: float
    faces: np.ndarray | None = None  # (F, 3) int vertex indices, optional

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.ndim != 3 or verts.shape[2] != 3:
            raise ValueError(f"vertices must have shape (T, V, 3), got {verts.shape}")
        if verts.shape[0] < 1 or verts.shape[1] < 3:
            raise ValueError("need at least 1 frame and 3 vertices")
        if not np.all(np.isfinite(verts)):
            raise ValueError("mesh vertices contain non-finite values")
        if not (np.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0):
            raise ValueError(f"frame rate must be positive, got {self.frame_rate_hz}")
        faces = self.faces
        if faces is not None:
            faces = np.asarray(faces, dtype=np.int64)
            if faces.ndim != 2 or faces.shape[1] != 3:
                raise ValueError(f"faces must have shape (F, 3), got {faces.shape}")
            if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[1]):
                raise ValueError("face indices out of vertex range")
            faces.flags.writeable = False
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))

    @property
    def num_frames(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[1]


@dataclass(frozen=True)
class MarkerMap:
    """Named markers bound to vertex indices, with symmetry and anchor info.

    A binding of None marks a marker that is declared but not yet attached
    to a vertex (the annotation tool fills these in). Vertex range checks
    against a concrete mesh happen at use time so a map stays independent
    of any particular topology.
    """

    marker_set_name: str
    entries: tuple[tuple[str, int | None], ...]
    symmetry_pairs: tuple[tuple[str, str], ...] = ()
    anchor_names: tuple[str, ...] = ()
    vertex_symmetry_table: np.ndarray | None = None  # (V,) mirror index per vertex
    symmetry_table_ref: str | None = None  # original file reference, kept on save

    def __post_init__(self):
        entries = tuple((str(n), None if v is None else int(v)) for n, v in self.entries)
        if not entries:
            raise ValueError("marker map has no entries")
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate marker names: {dupes}")
        for name, idx in entries:
            if "\t" in name or "\n" in name or not name:
                raise ValueError(f"invalid marker name {name!r}")
            if idx is not None and idx < 0:
                raise ValueError(f"marker {name!r} has negative vertex index {idx}")
        known = set(names)
        pairs = tuple((str(r), str(l)) for r, l in self.symmetry_pairs)
        for right, left in pairs:
            for side in (right, left):
                if side not in known:
                    raise ValueError(f"symmetry pair references unknown marker {side!r}")
        anchors = tuple(str(a) for a in self.anchor_names)
        for a in anchors:
            if a not in known:
                raise ValueError(f"anchor references unknown marker {a!r}")
        table = self.vertex_symmetry_table
        if table is not None:
            table = np.asarray(table, dtype=np.int64).reshape(-1)
            if table.size and (table.min() < 0 or table.max() >= table.size):
                raise ValueError("symmetry table entries out of range")
            table.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "symmetry_pairs", pairs)
        object.__setattr__(self, "anchor_names", anchors)
        object.__setattr__(self, "vertex_symmetry_table", table)

    @property
    def marker_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    def vertex_for(self, name: str) -> int:
        for n, idx in self.entries:
            if n == name:
                if idx is None:
                    raise MappingError(f"marker {name!r} is not bound to a vertex")
                return idx
        raise MappingError(f"unknown marker {name!r}")

    def left_of(self, right_name: str) -> str:
        for r, l in self.symmetry_pairs:
            if r == right_name:
                return l
        raise MappingError(f"marker {right_name!r} has no paired left-side marker")


@dataclass(frozen=True)
class MarkerTrajectory:
    """T x M labeled marker positions plus timing metadata."""

    marker_names: tuple[str, ...]
    positions: np.ndarray  # (T, M, 3)
    frame_rate_hz: float
    units: str = "m"
    start_frame: int = 1

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        names = tuple(str(n) for n in self.marker_names)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"positions must have shape (T, M, 3), got {pos.shape}")
        if pos.shape[0] < 1 or pos.shape[1] < 1:
            raise ValueError("trajectory needs at least one frame and one marker")
        if pos.shape[1] != len(names):
            raise ValueError(
                f"{len(names)} marker names for {pos.shape[1]} position columns"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("marker positions contain non-finite values")
        if len(set(names)) != len(names):
            raise ValueError("duplicate marker names in trajectory")
        for n in names:
            if "\t" in n or not n:
                raise ValueError(f"invalid marker name {n!r}")
        if self.units not in UNIT_TAGS:
            raise ValueError(f"units must be one of {UNIT_TAGS}, got {self.units!r}")
        if not (np.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0):
            raise ValueError(f"frame rate must be positive, got {self.frame_rate_hz}")
        pos.flags.writeable = False
        object.__setattr__(self, "marker_names", names)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))
        object.__setattr__(self, "start_frame", int(self.start_frame))

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def num_markers(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions: np.ndarray, units: str | None = None) -> "MarkerTrajectory":
        return dataclasses.replace(
            self, positions=positions, units=self.units if units is None else units
        )

    def in_meters(self) -> "MarkerTrajectory":
        if self.units == "m":
            return self
        return self.with_positions(self.positions / 1000.0, units="m")

    def in_millimeters(self) -> "MarkerTrajectory":
        if self.units == "mm":
            return self
        return self.with_positions(self.positions * 1000.0, units="mm")


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera rotation/translation plus the heights that set the scale.

    translation_m is meters; millimeter input files are converted at ingest
    and the original unit recorded in meta. predicted_height_m may be None,
    in which case build_twin measures it from the reference mesh frame.
    """

    rotation: np.ndarray  # (3, 3)
    translation_m: np.ndarray  # (3,)
    subject_height_m: float
    predicted_height_m: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        tr = np.asarray(self.translation_m, dtype=np.float64).reshape(3)
        if not is_rotation(rot):
            raise ValueError("camera rotation must be proper orthonormal within 1e-10")
        if not np.all(np.isfinite(tr)):
            raise ValueError("camera translation contains non-finite values")
        if not (np.isfinite(self.subject_height_m) and self.subject_height_m > 0):
            raise ValueError(f"subject height must be positive, got {self.subject_height_m}")
        if self.predicted_height_m is not None and not (
            np.isfinite(self.predicted_height_m) and self.predicted_height_m > 0
        ):
            raise ValueError(f"predicted height must be positive, got {self.predicted_height_m}")
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation_m", tr)


def extract_markers(mesh: MeshSequence, marker_map: MarkerMap) -> MarkerTrajectory:
    """Gather each marker's bound vertex position in every frame."""
    indices = []
    for name, idx in marker_map.entries:
        if idx is None:
            raise MappingError(f"marker {name!r} is not bound to a vertex")
        if idx >= mesh.num_vertices:
            raise MappingError(
                f"marker {name!r} maps to vertex {idx}, mesh has {mesh.num_vertices} vertices"
            )
        indices.append(idx)
    positions = mesh.vertices[:, indices, :]
    return MarkerTrajectory(
        marker_names=marker_map.marker_names,
        positions=positions,
        frame_rate_hz=mesh.frame_rate_hz,
        units="m",
    )


def anchor_align(
    mesh_frame, marker_map: MarkerMap, target_anchor_positions
) -> tuple[SimilarityTransform, np.ndarray]:
    """Fit the anchor-marker similarity transform and apply it to a whole frame.

    The anchors named in the map are looked up in mesh_frame and fit against
    target_anchor_positions (same order); the resulting transform is applied
    to every vertex of the frame.
    """
    frame = as_points(mesh_frame, "mesh_frame")
    targets = as_points(target_anchor_positions, "target_anchor_positions")
    if not marker_map.anchor_names:
        raise MappingError("marker map declares no anchors")
    if targets.shape[0] != len(marker_map.anchor_names):
        raise ValueError(
            f"{targets.shape[0]} targets for {len(marker_map.anchor_names)} anchors"
        )
    anchor_idx = []
    for name in marker_map.anchor_names:
        idx = marker_map.vertex_for(name)
        if idx >= frame.shape[0]:
            raise MappingError(
                f"anchor {name!r} maps to vertex {idx}, frame has {frame.shape[0]} vertices"
            )
        anchor_idx.append(idx)
    transform = umeyama_fit(frame[anchor_idx], targets)
    return transform, apply_transform(transform, frame)


def nearest_vertex(mesh_frame, query) -> int:
    """Index of the frame vertex closest to query; ties break low."""
    frame = as_points(mesh_frame, "mesh_frame")
    if frame.shape[0] == 0:
        raise ValueError("empty mesh frame")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d2 = np.square(frame - q).sum(axis=1)
    return int(np.argmin(d2))


def mirror_bindings(
    marker_map: MarkerMap, side_entries: list[tuple[str, int]]
) -> list[tuple[str, int]]:
    """Derive left-side bindings from right-side ones via the symmetry table."""
    table = marker_map.vertex_symmetry_table
    if table is None:
        raise MappingError("marker map has no vertex symmetry table")
    out = []
    for right_name, idx in side_entries:
        left_name = marker_map.left_of(right_name)
        idx = int(idx)
        if not (0 <= idx < table.size):
            raise MappingError(
                f"vertex {idx} for marker {right_name!r} outside symmetry table (size {table.size})"
            )
        out.append((left_name, int(table[idx])))
    return out


def height_scale(h_subject_m: float, h_predicted_m: float) -> float:
    """Subject height over predicted mesh height."""
    if not (np.isfinite(h_subject_m) and h_subject_m > 0):
        raise ValueError(f"subject height must be positive, got {h_subject_m}")
    if not (np.isfinite(h_predicted_m) and h_predicted_m > 0):
        raise ValueError(f"predicted height must be positive, got {h_predicted_m}")
    return h_subject_m / h_predicted_m


def predicted_height(mesh: MeshSequence, frame: int = 0) -> float:
    """Vertical (y) extent of one frame's vertex cloud."""
    if not (0 <= frame < mesh.num_frames):
        raise ValueError(f"frame {frame} out of range [0, {mesh.num_frames})")
    ys = mesh.vertices[frame, :, 1]
    return float(ys.max() - ys.min())


def camera_to_world(traj: MarkerTrajectory, ext: CameraExtrinsics) -> MarkerTrajectory:
    """Map camera-frame marker positions to the world frame.

    Per point: p_world = R_cam^T @ (p_cam * s_height - t_cam), with
    s_height = subject_height / predicted_height. Scale applies to the
    points only, not to t_cam. Input must be meters.
    """
    if traj.units != "m":
        raise ValueError("camera_to_world expects a meter-denominated trajectory")
    if ext.predicted_height_m is None:
        raise ValueError(
            "extrinsics have no predicted height; build_twin computes it from the mesh"
        )
    s = height_scale(ext.subject_height_m, ext.predicted_height_m)
    # Row-vector form of R^T @ p is p @ R.
    world = (traj.positions * s - ext.translation_m) @ ext.rotation
    return traj.with_positions(world)


def ground_offset(traj: MarkerTrajectory) -> tuple[float, MarkerTrajectory]:
    """Vertical shift putting the lowest marker of the sequence at y = 0.

    dy = -min over frames and markers of y; applied even when negative
    (a floating subject is lowered onto the ground).
    """
    dy = -float(traj.positions[:, :, 1].min()) + 0.0
    shifted = traj.positions + np.array([0.0, dy, 0.0])
    return dy, traj.with_positions(shifted)


@dataclass(frozen=True)
class BuiltTwin:
    """Ground-aligned world trajectory plus the normalization actually applied."""

    trajectory: MarkerTrajectory
    height_scale: float
    predicted_height_m: float
    ground_offset_y: float


def build_twin(
    mesh: MeshSequence,
    marker_map: MarkerMap,
    ext: CameraExtrinsics,
    reference_frame: int = 0,
) -> BuiltTwin:
    """Extract markers, normalize camera->world, and ground the result.

    Runs extract_markers, camera_to_world, ground_offset in that order.
    When the extrinsics carry no predicted height it is measured on
    reference_frame of the mesh.
    """
    if ext.predicted_height_m is None:
        ext = dataclasses.replace(ext, predicted_height_m=predicted_height(mesh, reference_frame))
    extracted = extract_markers(mesh, marker_map)
    world = camera_to_world(extracted, ext)
    dy, grounded = ground_offset(world)
    return BuiltTwin(
        trajectory=grounded,
        height_scale=height_scale(ext.subject_height_m, ext.predicted_height_m),
        predicted_height_m=float(ext.predicted_height_m),
        ground_offset_y=dy,
    )
