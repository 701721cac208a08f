"""Rigid-body transforms on SO(3)/SE(3) and pose noise sampling.

Rotations are plain 3x3 numpy arrays. A :class:`Pose` maps points from its
body frame into the parent frame: ``p_parent = R @ p_body + t``.
All angles are radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

_EYE = np.eye(3)


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(w) @ v == cross(w, v)``."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def exp_so3(w) -> np.ndarray:
    """Rodrigues' formula. ``exp_so3(0)`` is the identity exactly."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return _EYE + hat(w)
    k = hat(w / theta)
    return _EYE + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def log_so3(R: np.ndarray) -> np.ndarray:
    return _ScipyRotation.from_matrix(R).as_rotvec()


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(R: np.ndarray) -> float:
    """Heading of the body x-axis projected on the world x-y plane."""
    return float(np.arctan2(R[1, 0], R[0, 0]))


def rotation_angle(R: np.ndarray) -> float:
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    ortho = np.linalg.norm(R.T @ R - _EYE)
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if not is_rotation(self.rotation):
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def planar(cls, x: float, y: float, yaw: float = 0.0) -> "Pose":
        return cls(rot_z(yaw), np.array([x, y, 0.0]))

    @property
    def yaw(self) -> float:
        return yaw_of(self.rotation)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
            and np.allclose(self.position, other.position, atol=atol, rtol=0.0)
        )

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.position

    def __repr__(self) -> str:
        x, y, z = self.position
        return f"Pose(yaw={np.degrees(self.yaw):.2f}deg, p=({x:.4f}, {y:.4f}, {z:.4f}))"


@dataclass(frozen=True)
class PoseNoiseModel:
    sigma_trans: float = 0.2
    sigma_rot: float = np.radians(5.0)

    def __post_init__(self):
        if self.sigma_trans < 0 or self.sigma_rot < 0:
            raise ValueError("noise standard deviations must be >= 0")


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.position + a.position)


def inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.position)


def relative_pose(x_i: Pose, x_j: Pose) -> Pose:
    """Pose of ``x_j`` expressed in the frame of ``x_i``."""
    Rt = x_i.rotation.T
    return Pose(Rt @ x_j.rotation, Rt @ (x_j.position - x_i.position))


def perturb(relative: Pose, noise: Pose) -> Pose:
    """Observation model: ``(R_rel R_eps, p_rel + p_eps)``."""
    return Pose(relative.rotation @ noise.rotation, relative.position + noise.position)


def rotation_chordal_distance_sq(a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a) - np.asarray(b)
    return float(np.sum(d * d))


def _uniform_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
    return v / n


def sample_pose_noise(model: PoseNoiseModel, rng: np.random.Generator) -> Pose:
    """Isotropic SE(3) noise.

    Translation is per-axis ``N(0, sigma_trans^2)``. Rotation is the exponential
    of a uniformly oriented tangent vector whose length is ``|N(0, sigma_rot^2)|``.
    The same number of draws is consumed whatever the sigmas are, so a stream
    stays aligned when noise is switched off.
    """
    t = rng.normal(0.0, 1.0, size=3) * model.sigma_trans
    axis = _uniform_unit_vector(rng)
    angle = abs(rng.normal(0.0, 1.0)) * model.sigma_rot
    return Pose(exp_so3(axis * angle), t)


def sample_planar_pose_noise(model: PoseNoiseModel, rng: np.random.Generator) -> Pose:
    """x/y translation and yaw only, for ground-vehicle dead reckoning."""
    dx, dy = rng.normal(0.0, 1.0, size=2) * model.sigma_trans
    dyaw = rng.normal(0.0, 1.0) * model.sigma_rot
    return Pose(rot_z(dyaw), np.array([dx, dy, 0.0]))


def random_rotation_of_angle(angle: float, rng: np.random.Generator) -> np.ndarray:
    return exp_so3(_uniform_unit_vector(rng) * angle)


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    return _uniform_unit_vector(rng)


def pose_to_quat(pose: Pose) -> tuple[float, float, float, float]:
    """(qx, qy, qz, qw) for file output."""
    return tuple(float(v) for v in _ScipyRotation.from_matrix(pose.rotation).as_quat())


def quat_to_rotation(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    return _ScipyRotation.from_quat([qx, qy, qz, qw]).as_matrix()
