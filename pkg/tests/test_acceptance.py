"""Acceptance suite: one test per release criterion, stated tolerances pinned.

Run with `pytest -s tests/test_acceptance.py` to see one pass/fail line
per criterion.
"""
import itertools
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from biotwin.cli import main
from biotwin.data import chain_path
from biotwin.geom import Box2, alignment_objective, apply_transform, umeyama_fit
from biotwin.iksolve import (
    IkSettings,
    forward_kinematics,
    load_chain,
    marker_jacobian,
    solve_ik_frame_detailed,
)
from biotwin.prompt import (
    Detection,
    DetectionConfig,
    build_prompt,
    filter_detections,
    select_primary,
)
from biotwin.trcio import load_motion, parse_trc, save_trc, write_trc
from biotwin.twin import CameraExtrinsics, MarkerTrajectory, camera_to_world, ground_offset

from .test_iksolve import fd_jacobian
from .util import (
    random_chain,
    random_rotation,
    random_trajectory,
    random_transform,
    write_pipeline_inputs,
)


@contextmanager
def criterion(num: int, name: str):
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] criterion {num}: FAIL - {name}")
        raise
    print(f"\n[acceptance] criterion {num}: PASS - {name}")


def test_criterion_1_procrustes_recovery():
    with criterion(1, "Procrustes recovery over 200 random anchor trials"):
        rng = np.random.default_rng(1001)
        start = time.perf_counter()
        for _ in range(200):
            src = rng.uniform(-1.0, 1.0, size=(7, 3))
            truth = random_transform(rng, scale_range=(0.5, 2.0), translation_range=1.0)
            dst = apply_transform(truth, src)
            fit = umeyama_fit(src, dst)
            assert abs(fit.scale - truth.scale) < 1e-9
            assert np.max(np.abs(fit.rotation - truth.rotation)) < 1e-9
            assert np.max(np.abs(fit.translation - truth.translation)) < 1e-9
            best = alignment_objective(fit, src, dst)
            for _ in range(100):
                cand = random_transform(rng, scale_range=(0.5, 2.0), translation_range=1.0)
                assert best <= alignment_objective(cand, src, dst)
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"took {elapsed:.2f} s"


def test_criterion_2_camera_equation_fidelity():
    with criterion(2, "camera_to_world equation fidelity and analytic round trip"):
        rng = np.random.default_rng(1002)
        rot = random_rotation(rng)
        t_m = rng.uniform(-1.0, 1.0, size=3)
        subject, predicted = 1.83, 1.52
        ext = CameraExtrinsics(
            rotation=rot, translation_m=t_m, subject_height_m=subject, predicted_height_m=predicted
        )
        s = subject / predicted
        traj = MarkerTrajectory(
            marker_names=tuple(f"M{i}" for i in range(10)),
            positions=rng.uniform(-5.0, 5.0, size=(100, 10, 3)),  # 1000 points
            frame_rate_hz=60.0,
        )
        out = camera_to_world(traj, ext)
        # Direct per-point evaluation of p_world = R^T (p_cam * s - t_cam).
        for t in range(traj.num_frames):
            for m in range(traj.num_markers):
                direct = rot.T @ (traj.positions[t, m] * s - t_m)
                assert np.max(np.abs(out.positions[t, m] - direct)) < 1e-12
        # Analytic inverse: p_cam = (R p_world + t_cam) / s.
        back = (out.positions @ rot.T + t_m) / s
        assert np.max(np.abs(back - traj.positions)) < 1e-12


def test_criterion_3_ground_contract():
    with criterion(3, "ground offset puts global min y at exactly 0, idempotently"):
        rng = np.random.default_rng(1003)
        for _ in range(50):
            traj = random_trajectory(
                rng, num_frames=int(rng.integers(1, 20)), num_markers=int(rng.integers(1, 8))
            )
            dy, grounded = ground_offset(traj)
            assert abs(grounded.positions[:, :, 1].min()) < 1e-12
            dy2, again = ground_offset(grounded)
            assert abs(dy2) < 1e-12
            assert np.array_equal(again.positions, grounded.positions)


def test_criterion_4_trc_round_trip(tmp_path):
    with criterion(4, "TRC write/parse round trip at 1e-5 and byte determinism"):
        rng = np.random.default_rng(1004)
        import io

        for i in range(100):
            traj = random_trajectory(
                rng,
                num_frames=int(rng.integers(1, 15)),
                num_markers=int(rng.integers(1, 6)),
                units="mm" if i % 3 == 0 else "m",
            )
            buf1, buf2 = io.BytesIO(), io.BytesIO()
            write_trc(traj, buf1, name="case.trc")
            write_trc(traj, buf2, name="case.trc")
            assert buf1.getvalue() == buf2.getvalue()
            parsed = parse_trc(io.BytesIO(buf1.getvalue()))
            assert parsed.marker_names == traj.marker_names
            assert np.max(np.abs(parsed.positions - traj.positions)) <= 1e-5


def test_criterion_5_jacobian_against_finite_differences():
    with criterion(5, "analytic Jacobian matches central differences on 20 random chains"):
        rng = np.random.default_rng(1005)
        for _ in range(20):
            chain = random_chain(rng, max_dofs=8)
            q = rng.uniform(-1.5, 1.5, size=chain.num_dofs)
            analytic = marker_jacobian(chain, q)
            numeric = fd_jacobian(chain, q, h=1e-6)
            denom = max(np.linalg.norm(analytic), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-5


def synth_angles(chain, num_frames, rng):
    """Smooth per-dof sinusoids comfortably inside any declared limits."""
    lo, hi = chain.limits_arrays()
    finite = np.isfinite(lo) & np.isfinite(hi)
    center = np.zeros(chain.num_dofs)
    span = np.full(chain.num_dofs, 0.6)
    center[finite] = (lo[finite] + hi[finite]) / 2.0
    span[finite] = (hi[finite] - lo[finite]) / 2.0
    amp = 0.5 * span
    ts = np.linspace(0.0, 1.0, num_frames)
    freqs = 1.0 + 0.25 * np.arange(chain.num_dofs)
    phases = 0.7 * np.arange(chain.num_dofs) + rng.uniform(0, 0.3, size=chain.num_dofs)
    return center + amp * np.sin(2 * np.pi * freqs * ts[:, None] + phases)


def run_ik_stage(chain_name, angles, tmp_path, capsys):
    """Markers by FK -> millimeter TRC -> the pipeline's IK stage (cmd_ik)."""
    chain = load_chain(chain_path(chain_name))
    positions = np.empty((len(angles), len(chain.markers), 3))
    for t, q in enumerate(angles):
        fk = forward_kinematics(chain, q)
        positions[t] = [fk[name] for name in chain.marker_names]
    traj = MarkerTrajectory(
        marker_names=chain.marker_names,
        positions=positions * 1000.0,  # millimeters keep the 5-decimal TRC sub-micron
        frame_rate_hz=100.0,
        units="mm",
    )
    trc = tmp_path / f"{chain_name}.trc"
    save_trc(traj, trc)
    mot = tmp_path / f"{chain_name}.mot"
    code = main(
        ["ik", "--trc", str(trc), "--chain", chain_name, "--out", str(mot), "--json-summary"]
    )
    captured = capsys.readouterr()
    assert code == 0, captured.err
    summary = json.loads(captured.out)
    table = load_motion(mot)
    return chain, traj, table, summary


def test_criterion_6_ik_recovery_on_shipped_chains(tmp_path, capsys):
    with criterion(6, "IK stage recovers synthesized motion on both shipped chains"):
        rng = np.random.default_rng(1006)
        start = time.perf_counter()
        for chain_name in ("planar_arm_2link", "lower_limb"):
            chain = load_chain(chain_path(chain_name))
            angles = synth_angles(chain, 100, rng)
            chain, traj, table, summary = run_ik_stage(chain_name, angles, tmp_path, capsys)
            recovered = np.radians(table.data[:, 1:])
            assert np.max(np.abs(recovered - angles)) < 1e-3, chain_name
            assert summary["max_rms_m"] < 1e-6, chain_name
            # Accepted-step cost monotonicity, on the same solver the stage runs.
            meters = traj.in_meters()
            col = {n: i for i, n in enumerate(meters.marker_names)}
            q0 = np.zeros(chain.num_dofs)
            for t in (0, len(angles) // 2, len(angles) - 1):
                targets = {n: meters.positions[t, col[n]] for n in chain.marker_names}
                result = solve_ik_frame_detailed(chain, targets, q0, IkSettings())
                costs = np.array(result.accepted_costs)
                assert np.all(np.diff(costs) <= 0.0)
                q0 = result.q
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"took {elapsed:.2f} s"


def test_criterion_7_prompt_logic_exhaustive():
    with criterion(7, "prompt filtering/selection/building match their definitions"):
        cfg = DetectionConfig()  # threshold 0.5
        assert cfg.confidence_threshold == 0.5
        box = Box2(0, 0, 10, 10)
        # Exhaustive small score sets around the strict boundary.
        scores = [0.0, 0.25, 0.49, 0.5, 0.51, 0.75, 1.0]
        for combo in itertools.chain.from_iterable(
            itertools.product(scores, repeat=n) for n in range(0, 4)
        ):
            dets = [Detection(box=box, score=s) for s in combo]
            kept = filter_detections(dets, cfg)
            assert kept == [d for d in dets if d.score > 0.5]
            if kept:
                best = select_primary(kept)
                assert best.score == max(d.score for d in kept)
                assert kept.index(best) == min(
                    i for i, d in enumerate(kept) if d.score == best.score
                )
        # Centroid containment over a grid of boxes.
        for x0, y0, w, h in itertools.product((0, 3, 17), (0, 5), (1, 9, 40), (2, 11)):
            b = Box2(x0, y0, x0 + w, y0 + h)
            p = build_prompt(Detection(box=b, score=0.9))
            assert p.point == ((2 * x0 + w) / 2, (2 * y0 + h) / 2)
            assert b.x_min <= p.point[0] <= b.x_max and b.y_min <= p.point[1] <= b.y_max
            assert p.box_label == 1 and p.point_label == 1


def test_criterion_8_pipeline_composition_byte_identical(tmp_path, capsys):
    with criterion(8, "cmd_pipeline output byte-identical to cmd_convert + cmd_ik"):
        inputs = write_pipeline_inputs(tmp_path, num_frames=20)
        pipe_dir = tmp_path / "pipe"
        args = [
            "--mesh", str(inputs["mesh"]),
            "--markers", str(inputs["markers"]),
            "--extrinsics", str(inputs["extrinsics"]),
        ]
        assert main(["pipeline", *args, "--chain", "planar_arm_2link", "--out-dir", str(pipe_dir)]) == 0

        seq_dir = tmp_path / "seq"
        seq_dir.mkdir()
        assert main(["convert", *args, "--out", str(seq_dir / "twin.trc")]) == 0
        assert (
            main(
                [
                    "ik",
                    "--trc", str(seq_dir / "twin.trc"),
                    "--chain", "planar_arm_2link",
                    "--out", str(seq_dir / "motion.mot"),
                ]
            )
            == 0
        )
        capsys.readouterr()
        assert (pipe_dir / "twin.trc").read_bytes() == (seq_dir / "twin.trc").read_bytes()
        assert (pipe_dir / "motion.mot").read_bytes() == (seq_dir / "motion.mot").read_bytes()
