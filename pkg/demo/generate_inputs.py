#!/usr/bin/env python3
"""Generate a synthetic demo scene for the biotwin pipeline and picker UI.

Builds a gait-like lower-limb motion with the shipped chain, wraps every
marker in a small octahedron blob so the mesh has faces to raycast, maps
the scene into a tilted camera frame, and writes all pipeline inputs:

    mesh_manifest.json + mesh.f32   camera-frame vertex sequence
    markers_demo.json + sym.u32     marker map with symmetry table
    extrinsics_demo.json            camera rotation/translation + height
    detections_demo.json            fake first-frame detector output

Afterwards:
    biotwin pipeline --mesh demo/data/mesh_manifest.json \
        --markers demo/data/markers_demo.json \
        --extrinsics demo/data/extrinsics_demo.json \
        --chain lower_limb --out-dir out --figures out/figures
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from biotwin.data import chain_path
from biotwin.geom import axis_angle_rotation
from biotwin.iksolve import forward_kinematics, load_chain

BLOB_RADIUS = 0.02
# Satellite offsets around each marker center: +x, -x, +y, -y, +z, -z.
SATELLITES = np.array(
    [
        [1, 0, 0], [-1, 0, 0],
        [0, 1, 0], [0, -1, 0],
        [0, 0, 1], [0, 0, -1],
    ],
    dtype=float,
) * BLOB_RADIUS
# Octahedron faces over the satellite indices (center is local index 0).
BLOB_FACES = [
    (1, 3, 5), (3, 2, 5), (2, 4, 5), (4, 1, 5),
    (3, 1, 6), (2, 3, 6), (4, 2, 6), (1, 4, 6),
]
VERTS_PER_MARKER = 7
# Mirror of each local blob vertex when the whole cluster flips across z.
LOCAL_MIRROR = [0, 1, 2, 3, 4, 6, 5]


def gait_angles(num_frames: int) -> np.ndarray:
    """Simple alternating-leg swing for the 13-dof lower-limb chain."""
    ts = np.linspace(0.0, 2.0, num_frames)  # two gait cycles
    phase = 2 * np.pi * ts
    cols = {
        "pelvis_tilt": 0.05 * np.sin(2 * phase),
        "pelvis_list": 0.04 * np.sin(phase),
        "pelvis_rotation": 0.08 * np.sin(phase),
        "hip_flexion_r": 0.35 * np.sin(phase),
        "hip_adduction_r": 0.05 * np.sin(phase + 0.4),
        "hip_rotation_r": 0.05 * np.sin(phase + 0.9),
        "knee_flexion_r": -0.35 + 0.3 * np.sin(phase + np.pi / 3),
        "ankle_flexion_r": 0.15 * np.sin(phase + 0.2),
        "hip_flexion_l": 0.35 * np.sin(phase + np.pi),
        "hip_adduction_l": 0.05 * np.sin(phase + np.pi + 0.4),
        "hip_rotation_l": 0.05 * np.sin(phase + np.pi + 0.9),
        "knee_flexion_l": -0.35 + 0.3 * np.sin(phase + np.pi + np.pi / 3),
        "ankle_flexion_l": 0.15 * np.sin(phase + np.pi + 0.2),
    }
    chain = load_chain(chain_path("lower_limb"))
    return np.column_stack([cols[name] for name in chain.dof_names])


def mirrored_marker(name: str) -> str:
    if name.startswith("r_"):
        return "l_" + name[2:]
    if name.startswith("l_"):
        return "r_" + name[2:]
    return name  # midline markers mirror onto themselves


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).parent / "data")
    parser.add_argument("--frames", type=int, default=100)
    parser.add_argument("--rate", type=float, default=50.0)
    args = parser.parse_args()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    chain = load_chain(chain_path("lower_limb"))
    marker_names = list(chain.marker_names)
    angles = gait_angles(args.frames)

    # World-frame blobs around every marker.
    num_vertices = len(marker_names) * VERTS_PER_MARKER
    world = np.empty((args.frames, num_vertices, 3))
    for t in range(args.frames):
        fk = forward_kinematics(chain, angles[t])
        for m, name in enumerate(marker_names):
            base = m * VERTS_PER_MARKER
            world[t, base] = fk[name]
            world[t, base + 1 : base + 7] = fk[name] + SATELLITES

    # Camera frame: p_cam = (R p_world + t) / s, the inverse of the
    # normalization the converter applies (s here mimics an HMR scale bias).
    cam_rot = axis_angle_rotation([0.0, 1.0, 0.0], np.radians(8.0))
    t_mm = np.array([120.0, -80.0, 2600.0])
    scale_bias = 1.07
    cam = (world @ cam_rot.T + t_mm / 1000.0) / scale_bias

    # The converter's height scale is subject/predicted with predicted taken
    # from the camera-frame rig; using the rig's own extent as the "subject
    # height" makes that scale cancel the bias above exactly.
    cam_extent = float(cam[0, :, 1].max() - cam[0, :, 1].min())
    subject_height = cam_extent * scale_bias

    (out / "mesh.f32").write_bytes(cam.astype("<f4").tobytes())
    faces = []
    for m in range(len(marker_names)):
        base = m * VERTS_PER_MARKER
        faces.extend([[base + a, base + b, base + c] for a, b, c in BLOB_FACES])
    (out / "mesh_manifest.json").write_text(
        json.dumps(
            {
                "num_frames": args.frames,
                "num_vertices": num_vertices,
                "frame_rate_hz": args.rate,
                "units": "m",
                "data": "mesh.f32",
                "faces": faces,
            }
        )
        + "\n"
    )

    # Symmetry table: cluster of marker m maps to the cluster of its mirror.
    table = np.empty(num_vertices, dtype=np.uint32)
    index_of = {n: i for i, n in enumerate(marker_names)}
    for m, name in enumerate(marker_names):
        mm = index_of[mirrored_marker(name)]
        for k in range(VERTS_PER_MARKER):
            table[m * VERTS_PER_MARKER + k] = mm * VERTS_PER_MARKER + LOCAL_MIRROR[k]
    (out / "sym.u32").write_bytes(table.astype("<u4").tobytes())

    pairs = [
        [n, mirrored_marker(n)]
        for n in marker_names
        if n.startswith("r_") and mirrored_marker(n) in index_of
    ]
    (out / "markers_demo.json").write_text(
        json.dumps(
            {
                "marker_set": "lower_limb_demo",
                "markers": [
                    {"name": n, "vertex": i * VERTS_PER_MARKER} for i, n in enumerate(marker_names)
                ],
                "symmetry_pairs": pairs,
                "anchors": [
                    "r_asis", "l_asis", "sacrum",
                    "r_knee_lat", "l_knee_lat", "r_ankle_lat", "l_ankle_lat",
                ],
                "symmetry_table": "sym.u32",
            },
            indent=2,
        )
        + "\n"
    )

    (out / "extrinsics_demo.json").write_text(
        json.dumps(
            {
                "R": cam_rot.tolist(),
                "t_mm": t_mm.tolist(),
                "subject_height_m": subject_height,
            },
            indent=2,
        )
        + "\n"
    )

    (out / "detections_demo.json").write_text(
        json.dumps(
            {
                "image": "frame_000001",
                "detections": [
                    {"box": [312.0, 48.0, 520.0, 660.0], "score": 0.94},
                    {"box": [40.0, 120.0, 180.0, 420.0], "score": 0.41},
                ],
            },
            indent=2,
        )
        + "\n"
    )

    print(f"wrote demo inputs to {out}/")
    print(f"  {args.frames} frames x {num_vertices} vertices, {len(faces)} faces")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
