"""biotwin: mesh sequences to OpenSim-style marker trajectories and joint angles.

Library layout mirrors the pipeline: geom (similarity transforms), prompt
(detection filtering and visual prompts), twin (marker extraction and
world normalization), trcio (TRC/motion/JSON files), iksolve (kinematic
chains and damped least-squares IK), plots (report figures), cli/serve
(orchestration and the marker-picker endpoint).
"""

from .errors import (
    BiotwinError,
    DegenerateGeometryError,
    FormatError,
    IkError,
    MappingError,
    NoSubjectError,
    SchemaError,
)
from .geom import (
    Box2,
    SimilarityTransform,
    apply_transform,
    axis_angle_rotation,
    box_centroid,
    compose,
    inverse,
    umeyama_fit,
)
from .iksolve import (
    IkSettings,
    KinematicChain,
    forward_kinematics,
    load_chain,
    marker_jacobian,
    solve_ik_frame,
    solve_ik_sequence,
)
from .prompt import (
    Detection,
    DetectionConfig,
    VisualPrompt,
    build_prompt,
    build_prompts,
    filter_detections,
    select_primary,
)
from .trcio import (
    MotionTable,
    load_extrinsics,
    load_marker_map,
    load_mesh_sequence,
    load_motion,
    load_trc,
    parse_motion,
    parse_trc,
    save_marker_map,
    save_motion,
    save_trc,
    write_motion,
    write_trc,
)
from .twin import (
    BuiltTwin,
    CameraExtrinsics,
    MarkerMap,
    MarkerTrajectory,
    MeshSequence,
    anchor_align,
    build_twin,
    camera_to_world,
    extract_markers,
    ground_offset,
    height_scale,
    mirror_bindings,
    nearest_vertex,
    predicted_height,
)

__version__ = "0.1.0"
