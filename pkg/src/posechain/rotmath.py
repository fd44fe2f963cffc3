"""Rotation representations and conversions.

Rotation matrices are plain ``(3, 3)`` float arrays, Euler triples are
``(3,)`` arrays of intrinsic X-Y-Z angles, and axis-angle pairs are held in
:class:`AxisAngle`. Most helpers broadcast over leading batch dimensions so
the kinematics layer can evaluate many poses in one call.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection, GimbalLock, NonUnitAxis

# input axis may be renormalised if its norm is within this of 1
AXIS_TOL = 1e-6
# orthonormality / determinant checks
ORTHO_TOL = 1e-9
# round-trip and mapping checks used by the tests
VERIFY_TOL = 1e-8
# |sin(pitch)| may not come closer than this to 1 when extracting Euler angles
GIMBAL_TOL = 1e-9
# shortest vector accepted as a direction
MIN_NORM = 1e-8
# below these, a + b or a x b are treated as exactly zero
_PARALLEL_EPS = 1e-12

DEFAULT_AXIS = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    angle: float


@dataclass(frozen=True)
class SolutionSpaceSample:
    """One member of the family of rotations carrying one direction onto another."""
    alpha: float
    axis: np.ndarray
    angle: float

    def matrix(self):
        return axis_angle_to_matrix(self.axis, self.angle)


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def is_rotation_matrix(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    eye = np.eye(3)
    ortho = np.abs(R @ np.swapaxes(R, -1, -2) - eye).max() <= tol
    return bool(ortho and np.abs(np.linalg.det(R) - 1.0).max() <= tol)


def _unit_axis(axis):
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis, axis=-1)
    if np.any(np.abs(norm - 1.0) > AXIS_TOL):
        raise NonUnitAxis(f"axis norm {norm} deviates from 1 by more than {AXIS_TOL}")
    return axis / norm[..., None]


def rodrigues(axis, angle):
    """Rotation matrix for a unit ``axis`` and ``angle``; no validation, broadcasts."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    c = np.cos(angle)[..., None, None]
    s = np.sin(angle)[..., None, None]
    outer = axis[..., :, None] * axis[..., None, :]
    return c * np.eye(3) + (1.0 - c) * outer + s * skew(axis)


def axis_angle_to_matrix(axis, angle=None):
    """Rotation by ``angle`` radians about ``axis``.

    Accepts either an :class:`AxisAngle` or an ``(axis, angle)`` pair. The axis
    must be unit length to within ``AXIS_TOL``; it is renormalised before use.
    """
    if isinstance(axis, AxisAngle):
        axis, angle = axis.axis, axis.angle
    return rodrigues(_unit_axis(axis), angle)


def matrix_to_axis_angle(R):
    """Inverse of :func:`axis_angle_to_matrix` with the angle in ``[0, pi]``.

    The angle is taken from ``atan2(|vee(R - R^T)|/2, (trace - 1)/2)``, which
    equals the arccos-of-trace form but stays accurate near 0 and pi.
    A zero rotation returns the conventional axis ``(1, 0, 0)``.
    """
    R = np.asarray(R, dtype=float)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = np.linalg.norm(v)
    c = 0.5 * (np.trace(R) - 1.0)
    angle = float(np.arctan2(s, c))
    if angle < _PARALLEL_EPS:
        return AxisAngle(DEFAULT_AXIS.copy(), 0.0)
    if c > 0.0:
        axis = v / s
    else:
        # sin(angle) is small here; read the axis off the symmetric part
        B = 0.5 * (R + R.T) - c * np.eye(3)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k] * (1.0 - c))
        if axis @ v < 0.0:
            axis = -axis
        axis = axis / np.linalg.norm(axis)
    return AxisAngle(axis, angle)


def euler_xyz_to_matrix(angles):
    """``Rx(theta) @ Ry(phi) @ Rz(psi)`` for intrinsic X-Y-Z angles; broadcasts."""
    angles = np.asarray(angles, dtype=float)
    cx, cy, cz = np.cos(angles[..., 0]), np.cos(angles[..., 1]), np.cos(angles[..., 2])
    sx, sy, sz = np.sin(angles[..., 0]), np.sin(angles[..., 1]), np.sin(angles[..., 2])
    R = np.empty(angles.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cz
    R[..., 0, 1] = -cy * sz
    R[..., 0, 2] = sy
    R[..., 1, 0] = cx * sz + sx * sy * cz
    R[..., 1, 1] = cx * cz - sx * sy * sz
    R[..., 1, 2] = -sx * cy
    R[..., 2, 0] = sx * sz - cx * sy * cz
    R[..., 2, 1] = sx * cz + cx * sy * sz
    R[..., 2, 2] = cx * cy
    return R


def matrix_to_euler_xyz(R):
    """Intrinsic X-Y-Z angles of ``R`` with the middle angle in (-pi/2, pi/2).

    Raises :class:`GimbalLock` when ``|R[0, 2]|`` is within ``GIMBAL_TOL`` of 1,
    where the first and last angles stop being separable.
    """
    R = np.asarray(R, dtype=float)
    if np.any(np.abs(R[..., 0, 2]) >= 1.0 - GIMBAL_TOL):
        raise GimbalLock("middle Euler angle at +-pi/2; joint bounds were violated upstream")
    theta = np.arctan2(-R[..., 1, 2], R[..., 2, 2])
    phi = np.arctan2(R[..., 0, 2], np.hypot(R[..., 0, 0], R[..., 0, 1]))
    psi = np.arctan2(-R[..., 0, 1], R[..., 0, 0])
    return np.stack([theta, phi, psi], axis=-1)


def _perpendicular(u):
    """Unit vector orthogonal to each ``u`` by Gram-Schmidt against x, or y if too close."""
    ref = np.zeros_like(u)
    near_x = np.abs(u[..., 0]) > 0.9
    ref[..., 0] = np.where(near_x, 0.0, 1.0)
    ref[..., 1] = np.where(near_x, 1.0, 0.0)
    w = ref - np.sum(ref * u, axis=-1, keepdims=True) * u
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def solution_space(a, b, alpha):
    """Rotation about a bisecting-plane axis that carries ``a`` onto ``b``.

    The axis is ``cos(alpha) c + sin(alpha) d`` with ``c = unit(a + b)`` and
    ``d = unit(a x b)``; every such axis is equidistant from both directions, so
    a single rotation about it maps one onto the other. Sweeping ``alpha`` over
    ``[-pi, pi]`` enumerates the whole one-parameter family.

    Inputs broadcast; scalar inputs give a :class:`SolutionSpaceSample`, batched
    inputs give ``(axes, angles)`` arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na < MIN_NORM) or np.any(nb < MIN_NORM):
        raise DegenerateDirection("cannot map a zero-length vector")
    a_hat = a / na[..., None]
    b_hat = b / nb[..., None]
    a_hat, b_hat = np.broadcast_arrays(a_hat, b_hat)

    summed = a_hat + b_hat
    cross = np.cross(a_hat, b_hat)
    sum_norm = np.linalg.norm(summed, axis=-1, keepdims=True)
    cross_norm = np.linalg.norm(cross, axis=-1, keepdims=True)
    antiparallel = sum_norm < _PARALLEL_EPS
    parallel = cross_norm < _PARALLEL_EPS

    perp = _perpendicular(a_hat)
    c_hat = np.where(antiparallel, perp, summed / np.where(antiparallel, 1.0, sum_norm))
    d_default = np.where(antiparallel, np.cross(a_hat, perp), perp)
    d_hat = np.where(parallel, d_default, cross / np.where(parallel, 1.0, cross_norm))

    ca, sa = np.cos(alpha)[..., None], np.sin(alpha)[..., None]
    axis = ca * c_hat + sa * d_hat
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)

    # both directions sit at the same angle from the axis; measure the turn between
    # their projections onto the plane normal to it
    pa = a_hat - np.sum(a_hat * axis, axis=-1, keepdims=True) * axis
    pb = b_hat - np.sum(b_hat * axis, axis=-1, keepdims=True) * axis
    sin_part = np.sum(axis * np.cross(pa, pb), axis=-1)
    cos_part = np.sum(pa * pb, axis=-1)
    angle = np.arctan2(sin_part, cos_part)
    angle = np.where(antiparallel[..., 0], np.pi, angle)

    if axis.ndim == 1:
        return SolutionSpaceSample(float(alpha), axis, float(angle))
    return axis, angle


def rotation_angle(R):
    """Angle in ``[0, pi]`` of rotation matrices ``R``; broadcasts."""
    R = np.asarray(R, dtype=float)
    vx = R[..., 2, 1] - R[..., 1, 2]
    vy = R[..., 0, 2] - R[..., 2, 0]
    vz = R[..., 1, 0] - R[..., 0, 1]
    s = 0.5 * np.sqrt(vx * vx + vy * vy + vz * vz)
    c = 0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0)
    return np.arctan2(s, c)


def relative_angle(R_a, R_b):
    """Geodesic angle between two orientations, i.e. the angle of ``R_a^T R_b``."""
    R_a = np.asarray(R_a, dtype=float)
    R_b = np.asarray(R_b, dtype=float)
    out = rotation_angle(np.swapaxes(R_a, -1, -2) @ R_b)
    return float(out) if out.ndim == 0 else out
