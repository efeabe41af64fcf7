import io
import json

import numpy as np
import pytest

from biotwin.errors import FormatError, SchemaError
from biotwin.trcio import (
    MotionTable,
    load_detections,
    load_extrinsics,
    load_marker_map,
    load_mesh_sequence,
    parse_motion,
    parse_trc,
    prompts_to_dict,
    save_marker_map,
    write_motion,
    write_trc,
)
from biotwin.prompt import build_prompt
from biotwin.twin import MarkerTrajectory

from .util import random_trajectory


def trc_bytes(traj, name="test.trc"):
    buf = io.BytesIO()
    write_trc(traj, buf, name=name)
    return buf.getvalue()


def single_marker_traj():
    return MarkerTrajectory(
        marker_names=("A",),
        positions=np.array([[[0.1, 0.2, 0.3]]]),
        frame_rate_hz=60.0,
    )


class TestWriteTrc:
    def test_layout_and_data_row(self):
        lines = trc_bytes(single_marker_traj()).decode().split("\n")
        assert lines[0] == "PathFileType\t4\t(X/Y/Z)\ttest.trc"
        assert lines[1].split("\t") == [
            "DataRate", "CameraRate", "NumFrames", "NumMarkers", "Units",
            "OrigDataRate", "OrigDataStartFrame", "OrigNumFrames",
        ]
        assert lines[2] == "60\t60\t1\t1\tm\t60\t1\t1"
        assert lines[3] == "Frame#\tTime\tA\t\t"
        assert lines[4] == "\t\tX1\tY1\tZ1"
        assert lines[5] == ""
        assert lines[6] == "1\t0.00000\t0.10000\t0.20000\t0.30000"

    def test_times_at_100hz(self):
        traj = MarkerTrajectory(
            marker_names=("A",),
            positions=np.zeros((2, 1, 3)),
            frame_rate_hz=100.0,
        )
        lines = trc_bytes(traj).decode().split("\n")
        assert lines[6].split("\t")[1] == "0.00000"
        assert lines[7].split("\t")[1] == "0.01000"

    def test_byte_deterministic(self):
        traj = random_trajectory(np.random.default_rng(1))
        assert trc_bytes(traj) == trc_bytes(traj)

    def test_round_trip_within_quantization(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            traj = random_trajectory(rng)
            parsed = parse_trc(io.BytesIO(trc_bytes(traj)))
            assert parsed.marker_names == traj.marker_names
            assert parsed.frame_rate_hz == traj.frame_rate_hz
            np.testing.assert_allclose(parsed.positions, traj.positions, atol=1e-5)


class TestParseTrc:
    def test_frame_count_mismatch_cites_line(self):
        traj = MarkerTrajectory(
            marker_names=("A",), positions=np.zeros((5, 1, 3)), frame_rate_hz=60.0
        )
        text = trc_bytes(traj).decode().split("\n")
        del text[7]  # drop one data row: header still declares 5 frames
        with pytest.raises(FormatError, match=r"line \d+.*5 frames.*4 rows"):
            parse_trc(io.BytesIO("\n".join(text).encode()))

    def test_marker_count_mismatch(self):
        text = trc_bytes(single_marker_traj()).decode().split("\n")
        text[3] = "Frame#\tTime\tA\t\t\tB\t\t"
        with pytest.raises(FormatError, match="line 4"):
            parse_trc(io.BytesIO("\n".join(text).encode()))

    def test_non_numeric_cell_cites_line(self):
        text = trc_bytes(single_marker_traj()).decode().split("\n")
        text[6] = "1\t0.00000\tabc\t0.20000\t0.30000"
        with pytest.raises(FormatError, match="line 7.*'abc'"):
            parse_trc(io.BytesIO("\n".join(text).encode()))

    def test_unsupported_units(self):
        text = trc_bytes(single_marker_traj()).decode().split("\n")
        text[2] = text[2].replace("\tm\t", "\tfurlong\t")
        with pytest.raises(FormatError, match="units"):
            parse_trc(io.BytesIO("\n".join(text).encode()))

    def test_millimeter_units_kept_and_convertible(self):
        traj = MarkerTrajectory(
            marker_names=("A",),
            positions=np.array([[[1000.0, 2000.0, 500.0]]]),
            frame_rate_hz=60.0,
            units="mm",
        )
        parsed = parse_trc(io.BytesIO(trc_bytes(traj)))
        assert parsed.units == "mm"
        meters = parsed.in_meters()
        np.testing.assert_allclose(meters.positions[0, 0], [1.0, 2.0, 0.5])

    def test_accepts_crlf(self):
        blob = trc_bytes(single_marker_traj()).replace(b"\n", b"\r\n")
        parsed = parse_trc(io.BytesIO(blob))
        np.testing.assert_allclose(parsed.positions[0, 0], [0.1, 0.2, 0.3])

    def test_not_a_trc(self):
        with pytest.raises(FormatError, match="line 1"):
            parse_trc(io.BytesIO(b"hello\nworld\n"))


class TestMotion:
    def table(self):
        return MotionTable(
            column_names=("time", "knee_angle"),
            data=np.array([[0.0, 12.345678]]),
            in_degrees=True,
            name="walk",
        )

    def motion_bytes(self, table):
        buf = io.BytesIO()
        write_motion(table, buf)
        return buf.getvalue()

    def test_single_row_layout(self):
        lines = self.motion_bytes(self.table()).decode().split("\n")
        assert lines[0] == "walk"
        assert lines[1] == "nRows=1"
        assert lines[2] == "nColumns=2"
        assert lines[3] == "inDegrees=yes"
        assert lines[4] == "endheader"
        assert lines[5] == "time\tknee_angle"
        assert lines[6].split("\t") == ["0", "12.345678"]

    def test_round_trip_relative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            rows = rng.integers(1, 20)
            cols = rng.integers(1, 6)
            data = np.column_stack(
                [np.arange(rows) * 0.01, rng.uniform(-180, 180, size=(rows, cols))]
            )
            table = MotionTable(
                column_names=("time",) + tuple(f"q{i}" for i in range(cols)),
                data=data,
                in_degrees=bool(rng.integers(0, 2)),
            )
            parsed = parse_motion(io.BytesIO(self.motion_bytes(table)))
            assert parsed.in_degrees == table.in_degrees
            assert parsed.column_names == table.column_names
            np.testing.assert_allclose(parsed.data, table.data, rtol=1e-7, atol=1e-9)

    def test_row_count_mismatch(self):
        blob = self.motion_bytes(self.table()).decode().split("\n")
        blob[1] = "nRows=3"
        with pytest.raises(FormatError, match="nRows=3.*1 rows"):
            parse_motion(io.BytesIO("\n".join(blob).encode()))

    def test_time_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            MotionTable(
                column_names=("time", "q"),
                data=np.array([[0.0, 1.0], [0.0, 2.0]]),
            )


class TestJsonConfigs:
    def test_marker_map_round_trip(self, tmp_path):
        table = np.array([1, 0, 3, 2], dtype=np.uint32)
        (tmp_path / "sym.u32").write_bytes(table.astype("<u4").tobytes())
        src = {
            "marker_set": "demo",
            "markers": [
                {"name": "R_x", "vertex": 2},
                {"name": "L_x", "vertex": None},
            ],
            "symmetry_pairs": [["R_x", "L_x"]],
            "anchors": ["R_x"],
            "symmetry_table": "sym.u32",
        }
        path = tmp_path / "map.json"
        path.write_text(json.dumps(src))
        mm = load_marker_map(path)
        assert mm.marker_set_name == "demo"
        assert mm.entries == (("R_x", 2), ("L_x", None))
        assert mm.anchor_names == ("R_x",)
        np.testing.assert_array_equal(mm.vertex_symmetry_table, [1, 0, 3, 2])

        out = tmp_path / "saved.json"
        save_marker_map(mm, out)
        reloaded = json.loads(out.read_text())
        assert reloaded["symmetry_table"] == "sym.u32"
        assert load_marker_map(out).entries == mm.entries

    def test_marker_map_schema_errors(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"markers": [{"name": "A", "vertex": 1.5}]}))
        with pytest.raises(SchemaError, match=r"markers\[0\].vertex"):
            load_marker_map(path)
        path.write_text(json.dumps({"markers": []}))
        with pytest.raises(SchemaError, match="markers"):
            load_marker_map(path)
        path.write_text("{ not json")
        with pytest.raises(SchemaError, match="invalid JSON"):
            load_marker_map(path)

    def test_extrinsics_converts_millimeters(self, tmp_path):
        path = tmp_path / "ext.json"
        path.write_text(
            json.dumps(
                {
                    "R": np.eye(3).tolist(),
                    "t_mm": [1000.0, 0.0, 0.0],
                    "subject_height_m": 1.8,
                }
            )
        )
        ext = load_extrinsics(path)
        np.testing.assert_allclose(ext.translation_m, [1.0, 0.0, 0.0])
        assert ext.subject_height_m == 1.8
        assert ext.predicted_height_m is None
        assert ext.meta["t_source_units"] == "mm"

    def test_extrinsics_schema_errors(self, tmp_path):
        path = tmp_path / "ext.json"
        path.write_text(json.dumps({"R": [[1, 0], [0, 1]], "t_mm": [0, 0, 0], "subject_height_m": 1.8}))
        with pytest.raises(SchemaError, match=r"\.R"):
            load_extrinsics(path)
        path.write_text(json.dumps({"t_mm": [0, 0, 0], "subject_height_m": 1.8}))
        with pytest.raises(SchemaError, match=r"\.R: missing"):
            load_extrinsics(path)

    def mesh_manifest(self, tmp_path, verts, rate=30.0, units="m"):
        t, v, _ = verts.shape
        (tmp_path / "mesh.f32").write_bytes(verts.astype("<f4").tobytes())
        manifest = {
            "num_frames": t,
            "num_vertices": v,
            "frame_rate_hz": rate,
            "units": units,
            "data": "mesh.f32",
        }
        path = tmp_path / "mesh.json"
        path.write_text(json.dumps(manifest))
        return path

    def test_mesh_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        verts = rng.uniform(-1, 1, size=(3, 5, 3)).astype(np.float32)
        mesh = load_mesh_sequence(self.mesh_manifest(tmp_path, verts))
        assert mesh.num_frames == 3 and mesh.num_vertices == 5
        np.testing.assert_allclose(mesh.vertices, verts.astype(np.float64))

    def test_mesh_truncated_binary(self, tmp_path):
        rng = np.random.default_rng(9)
        verts = rng.uniform(-1, 1, size=(3, 5, 3)).astype(np.float32)
        path = self.mesh_manifest(tmp_path, verts)
        blob = (tmp_path / "mesh.f32").read_bytes()
        (tmp_path / "mesh.f32").write_bytes(blob[:-4])
        with pytest.raises(SchemaError, match="bytes"):
            load_mesh_sequence(path)

    def test_mesh_inline_variant(self, tmp_path):
        verts = np.arange(27, dtype=float).reshape(1, 9, 3)
        manifest = {
            "num_frames": 1,
            "num_vertices": 9,
            "frame_rate_hz": 24.0,
            "units": "m",
            "vertices": verts.tolist(),
            "faces": [[0, 1, 2], [3, 4, 5]],
        }
        path = tmp_path / "inline.json"
        path.write_text(json.dumps(manifest))
        mesh = load_mesh_sequence(path)
        np.testing.assert_array_equal(mesh.vertices, verts)
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [3, 4, 5]])

    def test_mesh_inline_cap(self, tmp_path):
        manifest = {
            "num_frames": 1,
            "num_vertices": 1001,
            "frame_rate_hz": 24.0,
            "vertices": [[[0, 0, 0]] * 1001],
        }
        path = tmp_path / "big.json"
        path.write_text(json.dumps(manifest))
        with pytest.raises(SchemaError, match="capped"):
            load_mesh_sequence(path)

    def test_mesh_millimeter_units(self, tmp_path):
        verts = np.full((1, 3, 3), 1000.0, dtype=np.float32)
        mesh = load_mesh_sequence(self.mesh_manifest(tmp_path, verts, units="mm"))
        np.testing.assert_allclose(mesh.vertices, np.full((1, 3, 3), 1.0))

    def test_detections_round_trip(self, tmp_path):
        path = tmp_path / "dets.json"
        path.write_text(
            json.dumps(
                {
                    "image": "frame0001",
                    "detections": [
                        {"box": [0, 0, 10, 10], "score": 0.93},
                        {"box": [5, 5, 9, 9], "score": 0.4},
                    ],
                }
            )
        )
        image, dets = load_detections(path)
        assert image == "frame0001"
        assert len(dets) == 2 and dets[0].score == 0.93

        prompts = prompts_to_dict([build_prompt(dets[0])])
        assert prompts == {
            "prompts": [
                {"box": [0.0, 0.0, 10.0, 10.0], "box_label": 1, "point": [5.0, 5.0], "point_label": 1}
            ]
        }

    def test_detections_schema_error(self, tmp_path):
        path = tmp_path / "dets.json"
        path.write_text(json.dumps({"detections": [{"box": [0, 0, 10], "score": 0.9}]}))
        with pytest.raises(SchemaError, match=r"detections\[0\].box"):
            load_detections(path)
