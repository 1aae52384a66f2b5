"""Homogeneous rigid-transform algebra between LiDAR, camera and image frames.

Conventions: a RigidTransform T maps coordinates expressed in a source frame
into a destination frame, p_dst = T . p_src. Composition reads right to left,
so (A @ B) applies B first.
"""
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .constants import ORTHONORMAL_TOL
from .errors import BehindCameraError, FrameIndexError, InvalidRotationError


def rotation_deviation(rotation: np.ndarray) -> float:
    """Frobenius norm of R R^T - I."""
    r = np.asarray(rotation, dtype=np.float64)
    return float(np.linalg.norm(r @ r.T - np.eye(3)))


def check_rotation(rotation: np.ndarray, tol: float = ORTHONORMAL_TOL):
    """Raise InvalidRotationError unless rotation is orthonormal with det +1."""
    deviation = rotation_deviation(rotation)
    if not np.isfinite(deviation) or deviation > tol:
        raise InvalidRotationError(deviation)
    det = float(np.linalg.det(rotation))
    if abs(det - 1.0) > tol:
        raise InvalidRotationError(deviation, det)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """4x4 homogeneous rigid transform with bottom row (0, 0, 0, 1)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(4))

    @classmethod
    def from_rotation_translation(cls, rotation, translation) -> "RigidTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=np.float64)
        m[:3, 3] = np.asarray(translation, dtype=np.float64).reshape(3)
        return cls(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def to_3x4(self) -> np.ndarray:
        return np.array(self.matrix[:3, :])

    def inverse(self) -> "RigidTransform":
        """Analytic inverse (R^T, -R^T t)."""
        rt = self.rotation.T
        return RigidTransform.from_rotation_translation(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self . other (other is applied first)."""
        return RigidTransform(self.matrix @ other.matrix)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def apply(self, points) -> np.ndarray:
        return apply(self, points)

    def allclose(self, other: "RigidTransform", atol: float) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))


def lift_3x4(m) -> RigidTransform:
    """Append the (0, 0, 0, 1) row to a 3x4 [R | t] after validating R."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 4):
        raise ValueError(f"expected a 3x4 matrix, got shape {m.shape}")
    check_rotation(m[:, :3])
    return RigidTransform(np.vstack([m, [0.0, 0.0, 0.0, 1.0]]))


def rotation_z(yaw: float) -> np.ndarray:
    """Rotation about +z (counter-clockwise seen from above) by yaw radians."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def camera_axes() -> np.ndarray:
    """
    Rotation taking x-forward/y-left/z-up coordinates to camera coordinates
    (x right, y down, z forward).
    """
    return np.array([[0.0, -1.0, 0.0],
                     [0.0, 0.0, -1.0],
                     [1.0, 0.0, 0.0]])


def apply(transform: RigidTransform, points) -> np.ndarray:
    """
    Transform (N, 3) points; extra columns (intensity) are carried through.

    Returns float64 output of the same shape as the input.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        return apply(transform, pts[None, :])[0]
    out = np.array(pts, dtype=np.float64, copy=True)
    xyz = pts[:, :3]
    out[:, :3] = xyz @ transform.rotation.T + transform.translation
    return out


def lidar_to_lidar(i: int, t: int, calib, poses) -> RigidTransform:
    """
    Transform taking LiDAR-frame points of scan i into the LiDAR frame of scan t:

        M = Tr^-1 . pose_t^-1 . pose_i . Tr

    Args:
        i: Source frame index
        t: Target frame index
        calib: CalibData providing tr (LiDAR -> left camera)
        poses: PoseSequence of left-camera poses relative to frame 0
    """
    n = len(poses)
    for idx in (i, t):
        if not 0 <= idx < n:
            raise FrameIndexError(idx, n)
    tr = calib.tr_transform()
    pose_i = poses.transform(i)
    pose_t = poses.transform(t)
    return tr.inverse() @ pose_t.inverse() @ pose_i @ tr


class ImagePoint(NamedTuple):
    u: float
    v: float
    depth: float


def project_to_image(p, point) -> ImagePoint:
    """Project a camera-frame point with a 3x4 projection matrix."""
    p = np.asarray(p, dtype=np.float64)
    x, y, z = (float(c) for c in np.asarray(point, dtype=np.float64)[:3])
    if not z > 0:
        raise BehindCameraError(z)
    u_h, v_h, w_h = p @ np.array([x, y, z, 1.0])
    return ImagePoint(u_h / w_h, v_h / w_h, z)


def project_points_to_image(p, points) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized projection of (N, 3) camera-frame points.

    Returns:
        (uvd, in_front): (N, 3) array of u, v, depth and a boolean mask of points
        with positive depth; u and v are NaN where the mask is False.
    """
    p = np.asarray(p, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)[:, :3]
    in_front = pts[:, 2] > 0
    homo = np.hstack([pts, np.ones((len(pts), 1))]) @ p.T
    uvd = np.full((len(pts), 3), np.nan)
    uvd[:, 2] = pts[:, 2]
    uvd[in_front, 0] = homo[in_front, 0] / homo[in_front, 2]
    uvd[in_front, 1] = homo[in_front, 1] / homo[in_front, 2]
    return uvd, in_front
