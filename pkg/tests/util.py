"""Shared synthetic-data helpers for the test suite."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from biotwin.data import chain_path
from biotwin.geom import SimilarityTransform
from biotwin.iksolve import Dof, KinematicChain, MarkerAttachment, Segment, forward_kinematics, load_chain
from biotwin.twin import MarkerTrajectory, MeshSequence


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def random_transform(
    rng: np.random.Generator,
    scale_range: tuple[float, float] = (0.5, 2.0),
    translation_range: float = 1.0,
) -> SimilarityTransform:
    return SimilarityTransform(
        scale=float(rng.uniform(*scale_range)),
        rotation=random_rotation(rng),
        translation=rng.uniform(-translation_range, translation_range, size=3),
    )


def unit_tetrahedron() -> np.ndarray:
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )


def random_mesh(
    rng: np.random.Generator, num_frames: int = 5, num_vertices: int = 12, rate: float = 60.0
) -> MeshSequence:
    verts = rng.uniform(-1.0, 1.0, size=(num_frames, num_vertices, 3))
    return MeshSequence(vertices=verts, frame_rate_hz=rate)


def random_trajectory(
    rng: np.random.Generator,
    num_frames: int = 4,
    num_markers: int = 3,
    rate: float = 100.0,
    units: str = "m",
) -> MarkerTrajectory:
    return MarkerTrajectory(
        marker_names=tuple(f"M{i}" for i in range(num_markers)),
        positions=rng.uniform(-10.0, 10.0, size=(num_frames, num_markers, 3)),
        frame_rate_hz=rate,
        units=units,
    )


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_chain(rng: np.random.Generator, max_dofs: int = 8) -> KinematicChain:
    """Random marker-studded tree with 1..max_dofs revolute dofs."""
    num_segments = int(rng.integers(2, 5))
    budget = int(rng.integers(1, max_dofs + 1))
    segments = []
    for i in range(num_segments):
        take = int(rng.integers(0, min(3, budget) + 1))
        budget -= take
        segments.append(
            Segment(
                name=f"seg{i}",
                parent=None if i == 0 else int(rng.integers(0, i)),
                offset=rng.uniform(-0.6, 0.6, size=3),
                dofs=tuple(Dof(axis=random_unit_vector(rng)) for _ in range(take)),
            )
        )
    if sum(len(s.dofs) for s in segments) == 0:
        s0 = segments[0]
        segments[0] = Segment(
            name=s0.name, parent=None, offset=s0.offset, dofs=(Dof(axis=random_unit_vector(rng)),)
        )
    num_markers = int(rng.integers(3, 6))
    markers = tuple(
        MarkerAttachment(
            name=f"mk{j}",
            segment=int(rng.integers(0, num_segments)),
            offset=rng.uniform(-0.5, 0.5, size=3),
        )
        for j in range(num_markers)
    )
    return KinematicChain(segments=tuple(segments), markers=markers, name="random")


def planar_arm_angles(num_frames: int) -> np.ndarray:
    """Smooth nonnegative 2-dof angle sweep starting exactly at (0, 0)."""
    ts = np.linspace(0.0, 1.0, num_frames)
    q1 = 0.3 * (1.0 - np.cos(2 * np.pi * ts))
    q2 = 0.8 * np.sin(np.pi * ts) ** 2
    return np.column_stack([q1, q2])


def write_pipeline_inputs(tmp_path: Path, num_frames: int = 12, rate: float = 50.0) -> dict:
    """Mesh + markers + extrinsics files whose twin is a planar-arm FK track.

    The mesh holds [elbow, tip, body_low, body_high] per frame; body_high
    sits at y = 1.6875 (dyadic, so the f32 round trip is exact and the
    height scale comes out at exactly 1). Frame 0 has both arm markers at
    y = 0, which pins the ground offset to zero.
    """
    chain = load_chain(chain_path("planar_arm_2link"))
    angles = planar_arm_angles(num_frames)
    verts = np.zeros((num_frames, 4, 3))
    for t, q in enumerate(angles):
        fk = forward_kinematics(chain, q)
        verts[t, 0] = fk["elbow"]
        verts[t, 1] = fk["tip"]
        verts[t, 2] = [0.0, 0.0, 0.5]
        verts[t, 3] = [0.0, 1.6875, 0.5]

    (tmp_path / "mesh.f32").write_bytes(verts.astype("<f4").tobytes())
    mesh_manifest = tmp_path / "mesh.json"
    mesh_manifest.write_text(
        json.dumps(
            {
                "num_frames": num_frames,
                "num_vertices": 4,
                "frame_rate_hz": rate,
                "units": "m",
                "data": "mesh.f32",
            }
        )
    )
    markers = tmp_path / "markers.json"
    markers.write_text(
        json.dumps(
            {
                "marker_set": "planar_demo",
                "markers": [{"name": "elbow", "vertex": 0}, {"name": "tip", "vertex": 1}],
            }
        )
    )
    extrinsics = tmp_path / "extrinsics.json"
    extrinsics.write_text(
        json.dumps(
            {
                "R": np.eye(3).tolist(),
                "t_mm": [0.0, 0.0, 0.0],
                "subject_height_m": 1.6875,
            }
        )
    )
    return {
        "mesh": mesh_manifest,
        "markers": markers,
        "extrinsics": extrinsics,
        "angles": angles,
        "rate": rate,
    }
