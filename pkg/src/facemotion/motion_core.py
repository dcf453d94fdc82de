"""Parameter space and blendshape forward model for 3D facial motion.

A motion frame is a 58-dimensional state vector laid out as

    [0:50]   expression coefficients (unitless)
    [50:53]  jaw pose, axis-angle about the jaw hinge (radians)
    [53:56]  global pose, axis-angle about the origin (radians)
    [56:58]  eyelid values (unitless, nominally in [0, 1])

The forward model adds linear expression and eyelid blendshapes to a fixed
template mesh, rigidly rotates a designated jaw region about the jaw hinge,
and finally rotates the whole mesh by the global pose. All rotations use the
exact exponential map (Rodrigues formula). Coordinates are meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import IncompatibleShapeError, ModelConfigError

EXPRESSION_DIM = 50
JAW_DIM = 3
GLOBAL_DIM = 3
EYELID_DIM = 2
FRAME_DIM = EXPRESSION_DIM + JAW_DIM + GLOBAL_DIM + EYELID_DIM  # 58

EXPRESSION_SLICE = slice(0, 50)
JAW_SLICE = slice(50, 53)
GLOBAL_SLICE = slice(53, 56)
EYELID_SLICE = slice(56, 58)

CHANNEL_NAMES: List[str] = (
    [f"exp_{i:02d}" for i in range(EXPRESSION_DIM)]
    + ["jaw_rx", "jaw_ry", "jaw_rz"]
    + ["global_rx", "global_ry", "global_rz"]
    + ["eyelid_l", "eyelid_r"]
)

REGION_NAMES = ("lips", "face", "upper_face")
LANDMARK_NAMES = ("upper_lip", "lower_lip", "left_corner", "right_corner")


def _as_float_array(x, shape, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != shape:
        raise IncompatibleShapeError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def axis_angle_matrix(rvec: np.ndarray) -> np.ndarray:
    """Rotation matrix for an axis-angle vector via the Rodrigues formula.

    The rotation angle is the vector norm; a zero vector maps to the identity.
    """
    rvec = np.asarray(rvec, dtype=np.float64)
    theta = float(np.linalg.norm(rvec))
    if theta == 0.0:
        return np.eye(3)
    axis = rvec / theta
    kx, ky, kz = axis
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(theta) * k_cross + (1.0 - np.cos(theta)) * (k_cross @ k_cross)


@dataclass(frozen=True)
class FlameFrame:
    """One 58-dimensional motion frame."""

    expression: np.ndarray
    jaw_pose: np.ndarray
    global_pose: np.ndarray
    eyelid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "expression", _as_float_array(self.expression, (EXPRESSION_DIM,), "expression"))
        object.__setattr__(self, "jaw_pose", _as_float_array(self.jaw_pose, (JAW_DIM,), "jaw_pose"))
        object.__setattr__(self, "global_pose", _as_float_array(self.global_pose, (GLOBAL_DIM,), "global_pose"))
        object.__setattr__(self, "eyelid", _as_float_array(self.eyelid, (EYELID_DIM,), "eyelid"))

    @classmethod
    def zero(cls) -> "FlameFrame":
        return cls(np.zeros(EXPRESSION_DIM), np.zeros(JAW_DIM), np.zeros(GLOBAL_DIM), np.zeros(EYELID_DIM))

    @classmethod
    def from_vector(cls, vec) -> "FlameFrame":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (FRAME_DIM,):
            raise IncompatibleShapeError(f"frame vector must have shape ({FRAME_DIM},), got {vec.shape}")
        return cls(vec[EXPRESSION_SLICE], vec[JAW_SLICE], vec[GLOBAL_SLICE], vec[EYELID_SLICE])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.expression, self.jaw_pose, self.global_pose, self.eyelid])


@dataclass
class MotionSequence:
    """A timed sequence of motion frames, stored as a (T, 58) array."""

    params: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.ndim != 2 or self.params.shape[1] != FRAME_DIM:
            raise IncompatibleShapeError(
                f"params must have shape (T, {FRAME_DIM}), got {self.params.shape}"
            )
        if not np.all(np.isfinite(self.params)):
            raise ValueError("motion params contain non-finite values")
        self.fps = float(self.fps)
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @classmethod
    def from_frames(cls, frames, fps: float = 25.0) -> "MotionSequence":
        if len(frames) == 0:
            return cls(np.zeros((0, FRAME_DIM)), fps)
        return cls(np.stack([f.to_vector() for f in frames]), fps)

    def __len__(self) -> int:
        return self.params.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.fps

    def frame(self, i: int) -> FlameFrame:
        return FlameFrame.from_vector(self.params[i])

    def iter_frames(self):
        for i in range(len(self)):
            yield self.frame(i)


@dataclass
class VertexFrame:
    """An N x 3 vertex snapshot in meters."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise IncompatibleShapeError(f"vertices must have shape (N, 3), got {self.vertices.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertices contain non-finite values")


@dataclass
class BlendshapeModel:
    """Template mesh, blendshape bases, jaw hinge and named vertex sets.

    ``regions`` must provide ``lips``, ``face`` and ``upper_face`` index sets
    with lips a subset of face and upper_face disjoint from lips.
    ``landmarks`` must provide ``upper_lip``, ``lower_lip``, ``left_corner``
    and ``right_corner`` vertex indices.
    """

    template: np.ndarray
    expr_basis: np.ndarray
    eyelid_basis: np.ndarray
    jaw_joint: np.ndarray
    jaw_region: np.ndarray
    regions: Dict[str, np.ndarray] = field(default_factory=dict)
    landmarks: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=np.float64)
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            raise IncompatibleShapeError(f"template must have shape (N, 3), got {self.template.shape}")
        n = self.template.shape[0]
        self.expr_basis = np.asarray(self.expr_basis, dtype=np.float64)
        if self.expr_basis.shape != (n, 3, EXPRESSION_DIM):
            raise IncompatibleShapeError(
                f"expr_basis must have shape ({n}, 3, {EXPRESSION_DIM}), got {self.expr_basis.shape}"
            )
        self.eyelid_basis = np.asarray(self.eyelid_basis, dtype=np.float64)
        if self.eyelid_basis.shape != (n, 3, EYELID_DIM):
            raise IncompatibleShapeError(
                f"eyelid_basis must have shape ({n}, 3, {EYELID_DIM}), got {self.eyelid_basis.shape}"
            )
        self.jaw_joint = _as_float_array(self.jaw_joint, (3,), "jaw_joint")
        self.jaw_region = np.asarray(self.jaw_region, dtype=np.intp)
        self.regions = {k: np.asarray(v, dtype=np.intp) for k, v in self.regions.items()}
        self.landmarks = {k: int(v) for k, v in self.landmarks.items()}
        self._validate_indices(n)

    def _validate_indices(self, n: int) -> None:
        def check(idx, name):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ModelConfigError(f"{name} indices out of range for {n} vertices")

        check(self.jaw_region, "jaw_region")
        for name, idx in self.regions.items():
            check(idx, f"region '{name}'")
        for name, i in self.landmarks.items():
            if i < 0 or i >= n:
                raise ModelConfigError(f"landmark '{name}' index {i} out of range for {n} vertices")
        if "lips" in self.regions and "face" in self.regions:
            if not set(self.regions["lips"]) <= set(self.regions["face"]):
                raise ModelConfigError("lips region must be a subset of face region")
        if "lips" in self.regions and "upper_face" in self.regions:
            if set(self.regions["lips"]) & set(self.regions["upper_face"]):
                raise ModelConfigError("upper_face region must be disjoint from lips")

    @property
    def num_vertices(self) -> int:
        return self.template.shape[0]

    def region(self, name: str) -> np.ndarray:
        if name not in self.regions:
            raise ModelConfigError(f"model has no region '{name}'")
        return self.regions[name]

    def landmark(self, name: str) -> int:
        if name not in self.landmarks:
            raise ModelConfigError(f"model has no landmark '{name}'")
        return self.landmarks[name]


def forward_vertices(model: BlendshapeModel, frame: FlameFrame) -> VertexFrame:
    """Map one frame to mesh vertices.

    Expression and eyelid blendshapes are added to the template, the jaw
    region is rotated rigidly about the jaw hinge, then the global pose
    rotates the whole mesh about the origin.
    """
    v = (
        model.template
        + np.tensordot(model.expr_basis, frame.expression, axes=([2], [0]))
        + np.tensordot(model.eyelid_basis, frame.eyelid, axes=([2], [0]))
    )
    if np.any(frame.jaw_pose):
        rot = axis_angle_matrix(frame.jaw_pose)
        idx = model.jaw_region
        v[idx] = (v[idx] - model.jaw_joint) @ rot.T + model.jaw_joint
    if np.any(frame.global_pose):
        v = v @ axis_angle_matrix(frame.global_pose).T
    return VertexFrame(v)


def zero_pose(frame: FlameFrame) -> FlameFrame:
    """Strip the global pose, keeping expression, jaw and eyelids.

    The jaw is facial deformation, not head motion, so it is retained.
    Idempotent by construction.
    """
    return FlameFrame(frame.expression, frame.jaw_pose, np.zeros(GLOBAL_DIM), frame.eyelid)


def mouth_opening(model: BlendshapeModel, v: VertexFrame) -> float:
    """Euclidean distance between the upper-lip and lower-lip landmarks."""
    a = v.vertices[model.landmark("upper_lip")]
    b = v.vertices[model.landmark("lower_lip")]
    return float(np.linalg.norm(a - b))


def mouth_width(model: BlendshapeModel, v: VertexFrame) -> float:
    """Euclidean distance between the left and right lip-corner landmarks."""
    a = v.vertices[model.landmark("left_corner")]
    b = v.vertices[model.landmark("right_corner")]
    return float(np.linalg.norm(a - b))


def sequence_vertices(model: BlendshapeModel, m: MotionSequence, zero_posed: bool = False) -> List[VertexFrame]:
    """Forward vertices for every frame, optionally in zero-pose space."""
    out = []
    for frame in m.iter_frames():
        if zero_posed:
            frame = zero_pose(frame)
        out.append(forward_vertices(model, frame))
    return out


def sequence_vertex_array(model: BlendshapeModel, m: MotionSequence, zero_posed: bool = False) -> np.ndarray:
    """Stacked (T, N, 3) vertex array; convenience over sequence_vertices."""
    frames = sequence_vertices(model, m, zero_posed=zero_posed)
    if not frames:
        return np.zeros((0, model.num_vertices, 3))
    return np.stack([vf.vertices for vf in frames])
