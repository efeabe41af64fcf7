"""Desk-scale inverse kinematics on rotational kinematic chains.

A chain is a tree of segments, each with a fixed offset from its parent
(expressed in the parent's rotated frame) and 0-3 revolute degrees of
freedom about unit axes. Markers are rigidly attached to segments. Joint
angles are fit to marker targets per frame with damped least squares
(Levenberg-Marquardt, analytic Jacobian).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import IkError, SchemaError
from .geom import axis_angle_rotation
from .trcio import MotionTable
from .twin import MarkerTrajectory

DAMPING_OVERFLOW = 1e8
AXIS_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Dof:
    axis: np.ndarray  # unit (3,)
    limits: tuple[float, float] | None = None  # radians
    name: str = ""

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(axis)
        if not np.isfinite(norm) or abs(norm - 1.0) > AXIS_UNIT_TOL:
            raise ValueError(f"joint axis must be a unit vector, |axis| = {norm}")
        if self.limits is not None:
            lo, hi = self.limits
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"joint limits must satisfy lo < hi, got {self.limits}")
            object.__setattr__(self, "limits", (float(lo), float(hi)))
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class MarkerAttachment:
    name: str
    segment: int
    offset: np.ndarray  # segment-local (3,)

    def __post_init__(self):
        off = np.asarray(self.offset, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(off)):
            raise ValueError(f"marker {self.name!r} offset contains non-finite values")
        off.flags.writeable = False
        object.__setattr__(self, "offset", off)


@dataclass(frozen=True)
class Segment:
    name: str
    parent: int | None
    offset: np.ndarray  # from parent joint, parent-frame (3,)
    dofs: tuple[Dof, ...] = ()

    def __post_init__(self):
        off = np.asarray(self.offset, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(off)):
            raise ValueError(f"segment {self.name!r} offset contains non-finite values")
        if len(self.dofs) > 3:
            raise ValueError(f"segment {self.name!r} has {len(self.dofs)} dofs, max is 3")
        off.flags.writeable = False
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "dofs", tuple(self.dofs))


@dataclass(frozen=True)
class KinematicChain:
    segments: tuple[Segment, ...]
    markers: tuple[MarkerAttachment, ...]
    name: str = "chain"

    def __post_init__(self):
        segments = tuple(self.segments)
        markers = tuple(self.markers)
        if not segments:
            raise IkError("chain has no segments")
        roots = [i for i, s in enumerate(segments) if s.parent is None]
        if len(roots) != 1:
            raise IkError(f"chain must have exactly one root segment, found {len(roots)}")
        for i, s in enumerate(segments):
            if s.parent is not None and not (0 <= s.parent < len(segments)):
                raise IkError(f"segment {s.name!r} has invalid parent index {s.parent}")
            if s.parent == i:
                raise IkError(f"segment {s.name!r} is its own parent")

        # Topological order via BFS from the root; anything unreachable is a cycle.
        children: list[list[int]] = [[] for _ in segments]
        for i, s in enumerate(segments):
            if s.parent is not None:
                children[s.parent].append(i)
        order = [roots[0]]
        cursor = 0
        while cursor < len(order):
            order.extend(children[order[cursor]])
            cursor += 1
        if len(order) != len(segments):
            raise IkError("segment graph contains a cycle")

        marker_names = [m.name for m in markers]
        if len(set(marker_names)) != len(marker_names):
            raise IkError("duplicate marker attachment names")
        for m in markers:
            if not (0 <= m.segment < len(segments)):
                raise IkError(f"marker {m.name!r} attached to invalid segment {m.segment}")

        # Ancestor sets (self included) so Jacobian columns know what a dof moves.
        ancestors: list[frozenset[int]] = [frozenset()] * len(segments)
        for i in order:
            parent = segments[i].parent
            base = ancestors[parent] if parent is not None else frozenset()
            ancestors[i] = base | {i}

        dof_names = []
        dof_segments = []
        for i, s in enumerate(segments):
            for k, dof in enumerate(s.dofs):
                dof_names.append(dof.name or f"{s.name}_q{k}")
                dof_segments.append(i)
        if len(set(dof_names)) != len(dof_names):
            raise IkError("duplicate dof names in chain")

        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "markers", markers)
        object.__setattr__(self, "_topo_order", tuple(order))
        object.__setattr__(self, "_ancestors", tuple(ancestors))
        object.__setattr__(self, "_dof_names", tuple(dof_names))
        object.__setattr__(self, "_dof_segments", tuple(dof_segments))

    @property
    def num_dofs(self) -> int:
        return len(self._dof_names)

    @property
    def dof_names(self) -> tuple[str, ...]:
        return self._dof_names

    @property
    def marker_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.markers)

    def limits_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.num_dofs, -np.inf)
        hi = np.full(self.num_dofs, np.inf)
        j = 0
        for s in self.segments:
            for dof in s.dofs:
                if dof.limits is not None:
                    lo[j], hi[j] = dof.limits
                j += 1
        return lo, hi


@dataclass(frozen=True)
class IkSettings:
    max_iterations: int = 100
    cost_tolerance: float = 1e-10
    initial_damping: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 0.5
    marker_weights: Mapping[str, float] | None = None
    warm_start: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for attr in ("cost_tolerance", "initial_damping", "damping_increase", "damping_decrease"):
            v = getattr(self, attr)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{attr} must be positive, got {v}")
        if self.marker_weights is not None:
            for name, w in self.marker_weights.items():
                if not (np.isfinite(w) and w >= 0):
                    raise ValueError(f"weight for {name!r} must be >= 0, got {w}")


def _check_q(chain: KinematicChain, q) -> np.ndarray:
    arr = np.asarray(q, dtype=np.float64).reshape(-1)
    if arr.shape[0] != chain.num_dofs:
        raise IkError(f"expected {chain.num_dofs} joint angles, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise IkError("joint angles contain non-finite values")
    return arr


def _chain_state(chain: KinematicChain, q: np.ndarray):
    """World pose of every segment and every dof axis at configuration q."""
    n = len(chain.segments)
    seg_rot = np.empty((n, 3, 3))
    seg_origin = np.empty((n, 3))
    dof_axis_world = np.empty((chain.num_dofs, 3))
    dof_origin = np.empty((chain.num_dofs, 3))

    dof_start = []
    j = 0
    for s in chain.segments:
        dof_start.append(j)
        j += len(s.dofs)

    for i in chain._topo_order:
        s = chain.segments[i]
        if s.parent is None:
            parent_rot = np.eye(3)
            origin = s.offset.copy()
        else:
            parent_rot = seg_rot[s.parent]
            origin = seg_origin[s.parent] + parent_rot @ s.offset
        rot = parent_rot
        for k, dof in enumerate(s.dofs):
            jdx = dof_start[i] + k
            dof_axis_world[jdx] = rot @ dof.axis
            dof_origin[jdx] = origin
            rot = rot @ axis_angle_rotation(dof.axis, q[jdx])
        seg_rot[i] = rot
        seg_origin[i] = origin
    return seg_rot, seg_origin, dof_axis_world, dof_origin


def _marker_array(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    seg_rot, seg_origin, _, _ = _chain_state(chain, q)
    out = np.empty((len(chain.markers), 3))
    for m_idx, m in enumerate(chain.markers):
        out[m_idx] = seg_origin[m.segment] + seg_rot[m.segment] @ m.offset
    return out


def forward_kinematics(chain: KinematicChain, q) -> dict[str, np.ndarray]:
    """World position of every attached marker at joint angles q (radians)."""
    qv = _check_q(chain, q)
    positions = _marker_array(chain, qv)
    return {m.name: positions[i] for i, m in enumerate(chain.markers)}


def marker_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Analytic (3M x Q) partials of marker coordinates w.r.t. joint angles.

    Revolute column for a dof is axis x (marker - joint origin) in world
    frame; zero for markers not downstream of the dof's segment.
    """
    qv = _check_q(chain, q)
    seg_rot, seg_origin, dof_axis, dof_origin = _chain_state(chain, qv)
    jac = np.zeros((3 * len(chain.markers), chain.num_dofs))
    for m_idx, m in enumerate(chain.markers):
        pos = seg_origin[m.segment] + seg_rot[m.segment] @ m.offset
        moved_by = chain._ancestors[m.segment]
        for j in range(chain.num_dofs):
            if chain._dof_segments[j] in moved_by:
                jac[3 * m_idx : 3 * m_idx + 3, j] = np.cross(dof_axis[j], pos - dof_origin[j])
    return jac


@dataclass(frozen=True)
class IkFrameResult:
    q: np.ndarray
    residual_rms: float
    iterations: int
    accepted_costs: tuple[float, ...]  # initial cost followed by accepted-step costs
    converged: bool


def _frame_setup(chain: KinematicChain, targets: Mapping[str, np.ndarray], settings: IkSettings):
    attached = {m.name: i for i, m in enumerate(chain.markers)}
    for name in targets:
        if name not in attached:
            raise IkError(f"target marker {name!r} is not attached to the chain")
    weights = np.zeros(len(chain.markers))
    target_arr = np.zeros((len(chain.markers), 3))
    for name, pos in targets.items():
        p = np.asarray(pos, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(p)):
            raise IkError(f"target for marker {name!r} is non-finite")
        i = attached[name]
        w = 1.0
        if settings.marker_weights is not None:
            w = float(settings.marker_weights.get(name, 1.0))
        weights[i] = w
        target_arr[i] = p
    if not np.any(weights > 0):
        raise IkError("no usable markers: every target has zero weight")
    return target_arr, weights


def solve_ik_frame_detailed(
    chain: KinematicChain,
    targets: Mapping[str, np.ndarray],
    q0,
    settings: IkSettings = IkSettings(),
) -> IkFrameResult:
    """Levenberg-Marquardt fit of joint angles to one frame of marker targets.

    Steps are accepted only when the weighted cost decreases (damping then
    shrinks); otherwise damping grows and the step is retried. Joint limits
    are enforced by clamping each candidate before evaluation. Terminates
    on cost change below tolerance, iteration budget, or damping overflow.
    """
    target_arr, weights = _frame_setup(chain, targets, settings)
    used = weights > 0
    sqrt_w = np.sqrt(np.repeat(weights, 3))
    lo, hi = chain.limits_arrays()

    q = np.clip(_check_q(chain, q0), lo, hi)

    def cost_of(qv: np.ndarray) -> tuple[float, np.ndarray]:
        pos = _marker_array(chain, qv)
        r = (pos - target_arr).reshape(-1) * sqrt_w
        return float(r @ r), pos

    cost, positions = cost_of(q)
    accepted = [cost]
    lam = settings.initial_damping
    converged = False
    iterations = 0
    eye = np.eye(chain.num_dofs)

    for _ in range(settings.max_iterations):
        iterations += 1
        jac = marker_jacobian(chain, q) * sqrt_w[:, None]
        r = (positions - target_arr).reshape(-1) * sqrt_w
        g = jac.T @ r
        h = jac.T @ jac
        try:
            step = np.linalg.solve(h + lam * eye, -g)
        except np.linalg.LinAlgError:
            lam *= settings.damping_increase
            if lam > DAMPING_OVERFLOW:
                break
            continue
        candidate = np.clip(q + step, lo, hi)
        new_cost, new_positions = cost_of(candidate)
        if new_cost < cost:
            delta = cost - new_cost
            q, cost, positions = candidate, new_cost, new_positions
            accepted.append(cost)
            lam *= settings.damping_decrease
            if delta < settings.cost_tolerance:
                converged = True
                break
        else:
            if abs(new_cost - cost) < settings.cost_tolerance:
                converged = True
                break
            lam *= settings.damping_increase
            if lam > DAMPING_OVERFLOW:
                break

    dist2 = np.square(positions[used] - target_arr[used]).sum(axis=1)
    rms = float(np.sqrt(dist2.mean()))
    return IkFrameResult(
        q=q, residual_rms=rms, iterations=iterations, accepted_costs=tuple(accepted), converged=converged
    )


def solve_ik_frame(
    chain: KinematicChain,
    targets: Mapping[str, np.ndarray],
    q0,
    settings: IkSettings = IkSettings(),
) -> tuple[np.ndarray, float]:
    """Joint angles and final RMS marker residual for one frame."""
    result = solve_ik_frame_detailed(chain, targets, q0, settings)
    return result.q, result.residual_rms


@dataclass(frozen=True)
class IkSequenceStats:
    per_frame_rms: np.ndarray
    per_frame_iterations: np.ndarray
    ignored_markers: tuple[str, ...]  # trajectory markers with no chain attachment
    total_iterations: int


def solve_ik_sequence_detailed(
    chain: KinematicChain,
    traj: MarkerTrajectory,
    settings: IkSettings = IkSettings(),
) -> tuple[MotionTable, IkSequenceStats]:
    """Per-frame IK over a trajectory; returns the motion table plus stats.

    Trajectory markers without a chain attachment get zero weight and are
    reported in the stats rather than failing the solve. With warm start
    the previous frame's solution seeds the next; otherwise every frame
    starts from the neutral pose.
    """
    traj = traj.in_meters()
    attached = set(chain.marker_names)
    usable = [n for n in traj.marker_names if n in attached]
    ignored = tuple(n for n in traj.marker_names if n not in attached)
    if not usable:
        raise IkError(
            "no usable markers: trajectory names "
            f"{list(traj.marker_names)} have no chain attachment"
        )
    col_of = {n: i for i, n in enumerate(traj.marker_names)}

    lo, hi = chain.limits_arrays()
    neutral = np.clip(np.zeros(chain.num_dofs), lo, hi)
    q_prev = neutral
    angles = np.empty((traj.num_frames, chain.num_dofs))
    rms = np.empty(traj.num_frames)
    iters = np.empty(traj.num_frames, dtype=np.int64)

    for t in range(traj.num_frames):
        targets = {n: traj.positions[t, col_of[n]] for n in usable}
        q0 = q_prev if settings.warm_start else neutral
        try:
            result = solve_ik_frame_detailed(chain, targets, q0, settings)
        except IkError as exc:
            raise IkError(f"frame {t}: {exc}") from None
        angles[t] = result.q
        rms[t] = result.residual_rms
        iters[t] = result.iterations
        q_prev = result.q

    time_col = np.arange(traj.num_frames) / traj.frame_rate_hz
    data = np.column_stack([time_col, np.degrees(angles)])
    table = MotionTable(
        column_names=("time",) + chain.dof_names,
        data=data,
        in_degrees=True,
        name=chain.name,
    )
    stats = IkSequenceStats(
        per_frame_rms=rms,
        per_frame_iterations=iters,
        ignored_markers=ignored,
        total_iterations=int(iters.sum()),
    )
    return table, stats


def solve_ik_sequence(
    chain: KinematicChain,
    traj: MarkerTrajectory,
    settings: IkSettings = IkSettings(),
) -> MotionTable:
    table, _ = solve_ik_sequence_detailed(chain, traj, settings)
    return table


# ---------------------------------------------------------------------------
# Chain JSON


def chain_from_dict(data: dict, where: str = "chain") -> KinematicChain:
    raw_segments = data.get("segments")
    if not isinstance(raw_segments, list) or not raw_segments:
        raise SchemaError(f"{where}.segments: expected a non-empty list")
    segments = []
    for i, s in enumerate(raw_segments):
        loc = f"{where}.segments[{i}]"
        try:
            name = s["name"]
            parent = s.get("parent")
            offset = s.get("offset", [0.0, 0.0, 0.0])
            dofs = []
            for k, d in enumerate(s.get("dofs", [])):
                limits = d.get("limits")
                dofs.append(
                    Dof(
                        axis=np.asarray(d["axis"], dtype=np.float64),
                        limits=None if limits is None else (limits[0], limits[1]),
                        name=d.get("name", ""),
                    )
                )
            segments.append(Segment(name=name, parent=parent, offset=offset, dofs=tuple(dofs)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{loc}: {exc}") from None
    raw_markers = data.get("markers")
    if not isinstance(raw_markers, list) or not raw_markers:
        raise SchemaError(f"{where}.markers: expected a non-empty list")
    markers = []
    for i, m in enumerate(raw_markers):
        loc = f"{where}.markers[{i}]"
        try:
            markers.append(
                MarkerAttachment(name=m["name"], segment=int(m["segment"]), offset=m["offset"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{loc}: {exc}") from None
    try:
        return KinematicChain(
            segments=tuple(segments),
            markers=tuple(markers),
            name=data.get("name", "chain"),
        )
    except IkError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_chain(path: str | Path) -> KinematicChain:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return chain_from_dict(data, where=path.name)
