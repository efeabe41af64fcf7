"""Command-line pipeline: prompt, convert, ik, pipeline, serve, validate-trc.

Stages communicate through files (prompts JSON, TRC, motion) so each one
is independently testable and an external solver backend can be swapped
in at any boundary. Logs are line-oriented text on stderr; pass
--json-summary for a machine-readable result object on stdout.

Exit codes: 0 success, 1 internal error, 2 input/validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import __version__
from .data import BUILTIN_CHAINS, chain_path
from .errors import BiotwinError, NoSubjectError
from .iksolve import IkSettings, load_chain, solve_ik_sequence_detailed
from .prompt import DetectionConfig, build_prompt, build_prompts, filter_detections, select_primary
from .trcio import (
    load_detections,
    load_extrinsics,
    load_marker_map,
    load_mesh_sequence,
    load_trc,
    save_motion,
    save_prompts,
    save_trc,
)
from .twin import build_twin

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_chain(ref: str) -> Path:
    if ref in BUILTIN_CHAINS:
        return chain_path(ref)
    return Path(ref)


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset arguments from the --config JSON file; flags win."""
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise BiotwinError(f"{args.config}: config must be a JSON object")
    flat = dict(cfg)
    for section in ("ik", "detection"):
        sub = flat.pop(section, None)
        if isinstance(sub, dict):
            for k, v in sub.items():
                flat.setdefault(f"{section}_{k}", v)
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


def _ik_settings(args: argparse.Namespace) -> IkSettings:
    return IkSettings(
        max_iterations=int(args.ik_max_iterations) if args.ik_max_iterations is not None else 100,
        cost_tolerance=float(args.ik_cost_tolerance) if args.ik_cost_tolerance is not None else 1e-10,
        initial_damping=float(args.ik_damping) if args.ik_damping is not None else 1e-3,
        warm_start=not args.no_warm_start,
    )


def _emit_summary(args: argparse.Namespace, summary: dict) -> None:
    if getattr(args, "json_summary", False):
        print(json.dumps(summary))


# ---------------------------------------------------------------------------
# Subcommand implementations (shared by pipeline so outputs are identical)


def _run_prompt(args) -> dict:
    image, detections = load_detections(args.detections)
    threshold = 0.5 if args.threshold is None else float(args.threshold)
    cfg = DetectionConfig(confidence_threshold=threshold)
    kept = filter_detections(detections, cfg)
    if not kept:
        raise NoSubjectError(
            f"no detection above threshold {cfg.confidence_threshold} in {args.detections}"
        )
    if args.all_subjects:
        prompts = build_prompts(detections, cfg)
    else:
        prompts = [build_prompt(select_primary(kept))]
    out = Path(args.out)
    save_prompts(prompts, out)
    log(f"prompt: image {image!r}: {len(detections)} detections, {len(kept)} kept, "
        f"{len(prompts)} prompt(s) -> {out}")
    return {
        "command": "prompt",
        "image": image,
        "detections": len(detections),
        "kept": len(kept),
        "prompts": len(prompts),
        "output": str(out),
    }


def _run_convert(args) -> dict:
    mesh = load_mesh_sequence(args.mesh)
    marker_map = load_marker_map(args.markers)
    ext = load_extrinsics(args.extrinsics)
    reference_frame = 0 if args.reference_frame is None else int(args.reference_frame)
    result = build_twin(mesh, marker_map, ext, reference_frame=reference_frame)
    traj = result.trajectory
    units = args.units or "m"
    if units == "mm":
        traj = traj.in_millimeters()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trc(traj, out)
    log(
        f"convert: height scale {result.height_scale:.6g} "
        f"(predicted height {result.predicted_height_m:.6g} m), "
        f"ground offset dy {result.ground_offset_y:.6g} m"
    )
    log(f"convert: {traj.num_frames} frames x {traj.num_markers} markers ({units}) -> {out}")
    if args.figures:
        from . import plots

        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        fig = plots.plot_marker_heights(traj, fig_dir / (out.stem + "_heights.png"))
        log(f"convert: wrote figure {fig}")
    return {
        "command": "convert",
        "frames": traj.num_frames,
        "markers": traj.num_markers,
        "units": units,
        "height_scale": result.height_scale,
        "predicted_height_m": result.predicted_height_m,
        "ground_offset_y_m": result.ground_offset_y,
        "output": str(out),
    }


def _run_ik(args) -> dict:
    traj = load_trc(args.trc).in_meters()
    chain = load_chain(_resolve_chain(args.chain))
    settings = _ik_settings(args)
    table, stats = solve_ik_sequence_detailed(chain, traj, settings)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_motion(table, out)
    if stats.ignored_markers:
        log(f"ik: warning: trajectory markers without chain attachment: "
            f"{', '.join(stats.ignored_markers)}")
    log(
        f"ik: {table.num_rows} frames, mean RMS {stats.per_frame_rms.mean():.6g} m, "
        f"max {stats.per_frame_rms.max():.6g} m, {stats.total_iterations} iterations -> {out}"
    )
    if args.figures:
        from . import plots

        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        f1 = plots.plot_joint_angles(table, fig_dir / (out.stem + "_angles.png"))
        f2 = plots.plot_frame_residuals(
            table.data[:, 0], stats.per_frame_rms, fig_dir / (out.stem + "_residuals.png")
        )
        log(f"ik: wrote figures {f1}, {f2}")
    return {
        "command": "ik",
        "frames": table.num_rows,
        "coordinates": len(table.column_names) - 1,
        "mean_rms_m": float(stats.per_frame_rms.mean()),
        "max_rms_m": float(stats.per_frame_rms.max()),
        "total_iterations": stats.total_iterations,
        "ignored_markers": list(stats.ignored_markers),
        "output": str(out),
    }


# ---------------------------------------------------------------------------
# Subcommand entry points


def cmd_prompt(args) -> int:
    _emit_summary(args, _run_prompt(args))
    return EXIT_OK


def cmd_convert(args) -> int:
    _emit_summary(args, _run_convert(args))
    return EXIT_OK


def cmd_ik(args) -> int:
    _emit_summary(args, _run_ik(args))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out_dir = Path(args.out_dir)
    if args.dry_run:
        load_mesh_sequence(args.mesh)
        load_marker_map(args.markers)
        load_extrinsics(args.extrinsics)
        load_chain(_resolve_chain(args.chain))
        log("pipeline: dry run: all inputs valid, nothing written")
        _emit_summary(args, {"command": "pipeline", "dry_run": True})
        return EXIT_OK
    out_dir.mkdir(parents=True, exist_ok=True)
    trc_path = out_dir / "twin.trc"
    mot_path = out_dir / "motion.mot"

    convert_args = argparse.Namespace(**vars(args), out=None)
    convert_args.out = str(trc_path)
    convert_summary = _run_convert(convert_args)

    ik_args = argparse.Namespace(**vars(args))
    ik_args.trc = str(trc_path)
    ik_args.out = str(mot_path)
    ik_summary = _run_ik(ik_args)

    _emit_summary(
        args,
        {
            "command": "pipeline",
            "trc": str(trc_path),
            "motion": str(mot_path),
            "convert": convert_summary,
            "ik": ik_summary,
        },
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .serve import make_server

    mesh = load_mesh_sequence(args.mesh)
    marker_map = load_marker_map(args.markers)
    frame = 0 if args.frame is None else int(args.frame)
    port = 8000 if args.port is None else int(args.port)
    ui_dir = args.ui_dir
    if ui_dir is None:
        default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if default_ui.is_dir():
            ui_dir = default_ui
    try:
        server = make_server(
            mesh,
            marker_map,
            mapping_path=args.markers,
            host=args.host,
            port=port,
            frame=frame,
            ui_dir=ui_dir,
            verbose=args.verbose,
        )
    except OSError as exc:
        raise BiotwinError(f"cannot bind {args.host}:{port}: {exc}") from None
    host, actual_port = server.server_address[:2]
    log(f"serve: listening on http://{host}:{actual_port} (frame {frame}, "
        f"ui {'none' if ui_dir is None else ui_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        log("serve: shutting down")
    finally:
        server.server_close()
    return EXIT_OK


def cmd_validate_trc(args) -> int:
    traj = load_trc(args.trc)
    log(
        f"validate-trc: {args.trc}: {traj.num_frames} frames x {traj.num_markers} markers "
        f"at {traj.frame_rate_hz:g} Hz, units {traj.units}"
    )
    _emit_summary(
        args,
        {
            "command": "validate-trc",
            "frames": traj.num_frames,
            "markers": traj.num_markers,
            "frame_rate_hz": traj.frame_rate_hz,
            "units": traj.units,
            "marker_names": list(traj.marker_names),
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override its values")
    p.add_argument("--json-summary", action="store_true", help="print a JSON result on stdout")


def _add_ik_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ik-max-iterations", type=int, default=None, help="LM iteration cap (100)")
    p.add_argument("--ik-cost-tolerance", type=float, default=None, help="absolute cost-change stop (1e-10)")
    p.add_argument("--ik-damping", type=float, default=None, help="initial LM damping (1e-3)")
    p.add_argument("--no-warm-start", action="store_true", help="solve every frame from the neutral pose")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biotwin",
        description="Mesh sequences to OpenSim-style TRC marker trajectories and IK joint angles.",
    )
    parser.add_argument("--version", action="version", version=f"biotwin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompt", help="filter detections and write box+point prompts")
    p.add_argument("detections", help="detections JSON file")
    p.add_argument("--out", required=True, help="output prompts JSON path")
    p.add_argument("--threshold", type=float, default=None, help="confidence threshold (0.5)")
    p.add_argument("--all-subjects", action="store_true", help="one prompt per kept detection")
    _add_common(p)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("convert", help="mesh sequence -> world-aligned TRC")
    p.add_argument("--mesh", default=None, help="mesh manifest JSON")
    p.add_argument("--markers", default=None, help="marker map JSON")
    p.add_argument("--extrinsics", default=None, help="camera extrinsics JSON")
    p.add_argument("--out", default=None, help="output TRC path")
    p.add_argument("--units", choices=("m", "mm"), default=None, help="TRC units (m)")
    p.add_argument("--reference-frame", type=int, default=None, help="frame for predicted height (0)")
    p.add_argument("--figures", default=None, help="directory for report figures")
    _add_common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("ik", help="TRC -> joint-angle motion file")
    p.add_argument("--trc", default=None, help="input TRC path")
    p.add_argument("--chain", default=None, help=f"chain JSON path or builtin: {', '.join(BUILTIN_CHAINS)}")
    p.add_argument("--out", default=None, help="output motion path")
    p.add_argument("--figures", default=None, help="directory for report figures")
    _add_ik_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("pipeline", help="convert then ik in one run")
    p.add_argument("--mesh", default=None)
    p.add_argument("--markers", default=None)
    p.add_argument("--extrinsics", default=None)
    p.add_argument("--chain", default=None)
    p.add_argument("--out-dir", default=None, help="directory for twin.trc and motion.mot")
    p.add_argument("--units", choices=("m", "mm"), default=None)
    p.add_argument("--reference-frame", type=int, default=None)
    p.add_argument("--figures", default=None)
    p.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")
    _add_ik_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="HTTP endpoint for the marker-picker UI")
    p.add_argument("--mesh", default=None, help="mesh manifest JSON")
    p.add_argument("--markers", default=None, help="marker map JSON (updated in place on save)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None, help="port (8000); 0 picks a free one")
    p.add_argument("--frame", type=int, default=None, help="reference frame to serve (0)")
    p.add_argument("--ui-dir", default=None, help="static UI directory (frontend/dist)")
    p.add_argument("--verbose", action="store_true", help="log every request")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("validate-trc", help="parse a TRC file and report its shape")
    p.add_argument("trc", help="TRC path")
    _add_common(p)
    p.set_defaults(func=cmd_validate_trc)

    return parser


REQUIRED = {
    "convert": ("mesh", "markers", "extrinsics", "out"),
    "ik": ("trc", "chain", "out"),
    "pipeline": ("mesh", "markers", "extrinsics", "chain", "out_dir"),
    "serve": ("mesh", "markers"),
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        missing = [
            f"--{name.replace('_', '-')}"
            for name in REQUIRED.get(args.command, ())
            if getattr(args, name, None) is None
        ]
        if missing:
            raise BiotwinError(
                f"{args.command}: missing required arguments (flag or config): {', '.join(missing)}"
            )
        return args.func(args)
    except BiotwinError as exc:
        log(f"error: {exc}")
        return EXIT_INPUT
    except FileNotFoundError as exc:
        log(f"error: file not found: {exc.filename or exc}")
        return EXIT_INPUT
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        log(f"error: {exc}")
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
