"""Pose and temporal objective terms.

Pose terms compare directions only, so keypoint sets with the wrong overall
scale or inconsistent bone lengths can still be fitted. All angles come from
the angle between unit vectors, computed in a form that
stays accurate near zero.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTarget, InconsistentChain, SequenceTooShort, ValidationError

MIN_LINK = 1e-6
TEMPORAL_NORMS = ("l1", "l2", "sq")
# squared change keeps the temporal term on the scale of the pose terms
DEFAULT_NORM = "sq"


@dataclass(frozen=True)
class PoseSequence:
    """Keypoint trajectories ``(F, K, 3)`` in meters with their names."""
    keypoints: tuple
    positions: np.ndarray
    fps: float | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 3 or pos.shape[1:] != (len(self.keypoints), 3) or len(pos) < 1:
            raise ValidationError(
                f"positions shape {pos.shape} does not match {len(self.keypoints)} keypoints")
        bad = np.argwhere(~np.isfinite(pos))
        if len(bad):
            f, k, _ = bad[0]
            raise ValidationError("non-finite coordinate",
                                  location=f"frame {f}, keypoint {self.keypoints[k]!r}")

    def __len__(self):
        return len(self.positions)

    def for_body(self, body):
        """Positions reordered to ``body.keypoints``; extra keypoints are ignored."""
        col = {k: i for i, k in enumerate(self.keypoints)}
        missing = [k for k in body.keypoints if k not in col]
        if missing:
            raise ValidationError(f"missing keypoint {missing[0]!r}", location="frame 0")
        return self.positions[:, [col[k] for k in body.keypoints], :]


def _unit(v, what):
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= MIN_LINK):
        raise DegenerateTarget(f"{what}: coincident keypoints, direction undefined")
    return v / norm


def frame_targets(body, keypoints):
    """Target unit vectors for the local and global terms.

    ``keypoints`` is ``(..., K, 3)`` in ``body.keypoints`` order. Returns
    ``(local, global)`` with shapes ``(..., L, 3)`` and ``(..., A, 3)``.
    """
    kp = np.asarray(keypoints, dtype=float)
    if kp.shape[-2] != len(body.keypoints):
        raise InconsistentChain(f"expected {len(body.keypoints)} keypoints, got {kp.shape[-2]}")
    child, parent = body.local_link_keypoints[:, 0], body.local_link_keypoints[:, 1]
    local = _unit(kp[..., child, :] - kp[..., parent, :], "local link")
    root = kp[..., body.root_keypoint:body.root_keypoint + 1, :]
    glob = _unit(kp[..., body.global_keypoints, :] - root, "root-to-joint vector")
    return local, glob


def _angles(u, v):
    """Angle between ``u`` and the unit vectors ``v``.

    Equal to ``arccos(clip(u_hat . v, -1, 1))``; the atan2 form keeps full
    precision near 0 where arccos of a rounded dot product bottoms out at 1e-8.
    """
    un = u / np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.broadcast_to(v, un.shape)
    cross = np.cross(un, v)
    return np.arctan2(np.sqrt(np.sum(cross * cross, axis=-1)), np.sum(un * v, axis=-1))


def pose_errors(body, positions, local_t, global_t):
    """Local and global pose errors for joint positions ``(..., N, 3)``.

    Targets broadcast against the batch dimensions of ``positions``.
    """
    links = body.local_links
    r_local = positions[..., links[:, 0], :] - positions[..., links[:, 1], :]
    r_global = positions[..., body.global_nodes, :] - positions[..., body.root:body.root + 1, :]
    e_local = _angles(r_local, local_t).mean(axis=-1)
    e_global = _angles(r_global, global_t).mean(axis=-1)
    return e_local, e_global


def _positions(gp):
    return np.asarray(gp.positions if hasattr(gp, "positions") else gp, dtype=float)


def local_pose_error(gp, frame, body):
    """Mean angle between chain link directions and keypoint link directions."""
    local_t, global_t = frame_targets(body, frame)
    return float(pose_errors(body, _positions(gp), local_t, global_t)[0])


def global_pose_error(gp, frame, body):
    """Mean angle between root-to-joint vectors of the arm joints."""
    local_t, global_t = frame_targets(body, frame)
    return float(pose_errors(body, _positions(gp), local_t, global_t)[1])


def frame_loss_batch(body, thetas, local_t, global_t):
    """Frame loss for parameter vectors ``(..., P)`` against prepared targets."""
    _, pos = body.forward(thetas)
    e_local, e_global = pose_errors(body, pos, local_t, global_t)
    return e_local + e_global


def frame_loss(theta, frame, body):
    """Local plus global pose error of ``theta`` against one keypoint frame."""
    local_t, global_t = frame_targets(body, frame)
    return float(frame_loss_batch(body, np.asarray(theta, float), local_t, global_t))


def frame_differences(thetas):
    """Per-frame parameter changes: forward at the first frame, central inside,
    backward at the last. ``thetas`` is ``(..., M, P)``."""
    X = np.asarray(thetas, dtype=float)
    M = X.shape[-2]
    if M < 2:
        raise SequenceTooShort(f"need at least 2 frames, got {M}")
    D = np.empty_like(X)
    D[..., 0, :] = X[..., 1, :] - X[..., 0, :]
    D[..., -1, :] = X[..., -1, :] - X[..., -2, :]
    if M > 2:
        D[..., 1:-1, :] = 0.5 * (X[..., 2:, :] - X[..., :-2, :])
    return D


def joint_magnitudes(D, owner=None, norm=DEFAULT_NORM):
    """Sum over joints of each joint's change magnitude, per leading index.

    ``owner`` maps every parameter to its joint; it is only needed for norms
    that do not separate over parameters.
    """
    if norm == "l1":
        return np.abs(D).sum(axis=-1)
    if norm not in TEMPORAL_NORMS:
        raise ValueError(f"unknown temporal norm {norm!r}; use one of {TEMPORAL_NORMS}")
    sq = D * D
    if norm == "sq":
        return sq.sum(axis=-1)
    if owner is None:
        raise ValueError("the l2 norm needs the parameter-to-joint map")
    n_joints = int(np.max(owner)) + 1
    per_joint = np.zeros(D.shape[:-1] + (n_joints,))
    for j in range(n_joints):
        per_joint[..., j] = sq[..., owner == j].sum(axis=-1)
    return np.sqrt(per_joint).sum(axis=-1)


def temporal_error(thetas, body=None, norm=DEFAULT_NORM, stitch=None):
    """Mean over frames of the summed per-joint parameter change.

    ``stitch`` is the final parameter vector of the preceding patch; its
    difference to the first frame enters the sum as one more frame term
    before averaging over the patch length.
    """
    X = np.asarray(thetas, dtype=float)
    owner = None if body is None else body.param_owner
    M = X.shape[-2]
    total = joint_magnitudes(frame_differences(X), owner, norm).sum(axis=-1)
    if stitch is not None:
        total = total + joint_magnitudes(X[..., 0, :] - np.asarray(stitch, float), owner, norm)
    return total / M


def temporal_loss(thetas, frames, body, lam, stitch=None, norm=DEFAULT_NORM):
    """Mean frame loss over a patch plus ``lam`` times its temporal error."""
    X = np.asarray(thetas, dtype=float)
    if len(X) < 2:
        raise SequenceTooShort(f"need at least 2 frames, got {len(X)}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    local_t, global_t = frame_targets(body, frames)
    pose = frame_loss_batch(body, X, local_t, global_t).mean()
    return float(pose + lam * temporal_error(X, body, norm, stitch))
