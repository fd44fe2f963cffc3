"""The 14-joint, 28-DOF human chain and its parameter vector.

Frame convention: X points to the subject's right, Y forward, Z up. The rest
pose is a quiet standing pose with arms hanging by the sides. Knee and spine
joints carry a 180 degree rest yaw so that positive X rotation is anatomical
flexion for every joint (knee flexion swings the shank backwards, spine and
neck flexion tilt forwards).

The parameter vector is laid out as::

    [n_x, n_y, n_z, angle,  <joint 1 Euler angles>, <joint 2 ...>, ...]

where the first four entries are the root's axis-angle orientation (the axis is
normalised before use) and every other reorientable joint contributes one entry
per permitted local axis, in X, Y, Z order.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentChain, InvalidLength, OutOfBounds
from .kinematics import WORLD, GlobalPose, Hierarchy, KinematicChain, Transform, fk_arrays
from .rotmath import euler_xyz_to_matrix, rodrigues

AXES = "XYZ"
ROOT_PARAMS = ("n_x", "n_y", "n_z", "angle")
_BOUND_TOL = 1e-12

# Default rest-pose link lengths in meters. User-overridable.
DEFAULT_LENGTHS = {
    "pelvis_width": 0.24,
    "spine": 0.25,
    "clavicle": 0.17,
    "upper_arm": 0.28,
    "forearm": 0.25,
    "thigh": 0.42,
    "shank": 0.42,
    "neck": 0.12,
    "head": 0.15,
}

# Default ranges of motion in radians; generic anatomical values, not
# subject-specific. Shoulder flexion is capped at 1.5 to stay clear of the
# Euler singularity of the hanging-arm frame.
DEFAULT_ROM = {
    "l_hip": {"X": (-0.5, 2.1), "Y": (-0.8, 0.8), "Z": (-0.7, 0.7)},
    "r_hip": {"X": (-0.5, 2.1), "Y": (-0.8, 0.8), "Z": (-0.7, 0.7)},
    "l_knee": {"X": (0.0, 2.4)},
    "r_knee": {"X": (0.0, 2.4)},
    "lower_spine": {"X": (-0.4, 0.6), "Z": (-0.4, 0.4)},
    "mid_spine": {"X": (-0.4, 0.6), "Z": (-0.4, 0.4)},
    "neck": {"X": (-0.7, 0.9)},
    "l_clavicle": {"Y": (-0.3, 0.3), "Z": (-0.3, 0.3)},
    "r_clavicle": {"Y": (-0.3, 0.3), "Z": (-0.3, 0.3)},
    "l_shoulder": {"X": (-1.0, 1.5), "Y": (-1.4, 1.4), "Z": (-1.2, 1.2)},
    "r_shoulder": {"X": (-1.0, 1.5), "Y": (-1.4, 1.4), "Z": (-1.2, 1.2)},
    "l_elbow": {"X": (0.0, 2.5)},
    "r_elbow": {"X": (0.0, 2.5)},
}

# Joints whose root-to-joint vectors enter the global pose term.
DEFAULT_GLOBAL_TERM = ("l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist")

LIMB_FLEXION = ("l_knee", "r_knee", "l_elbow", "r_elbow")
LOWER_LIMB = ("l_hip", "r_hip", "l_knee", "r_knee")


@dataclass(frozen=True)
class JointSpec:
    """One node of the chain.

    ``offset`` and ``rest_rotation`` place the joint in its parent's frame.
    ``dofs`` maps local axes to ``(lo, hi)`` ranges; joints without DOFs (other
    than the root) are end sites that carry a keypoint but are never rotated.
    """
    name: str
    parent: str | None
    offset: tuple
    rest_rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    dofs: dict = field(default_factory=dict)
    keypoint: str | None = None

    def __post_init__(self):
        for axis, (lo, hi) in self.dofs.items():
            if axis not in AXES:
                raise InconsistentChain(f"{self.name}: unknown axis {axis!r}")
            if not lo < hi:
                raise InconsistentChain(f"{self.name}: empty range {axis} [{lo}, {hi}]")
            if axis == "Y" and not (-np.pi / 2 < lo and hi < np.pi / 2):
                raise InconsistentChain(
                    f"{self.name}: Y range must stay inside (-pi/2, pi/2) to avoid gimbal lock")
            if hi - lo > 2 * np.pi:
                raise InconsistentChain(f"{self.name}: {axis} range wider than 2 pi")
        if self.parent is None and self.dofs:
            raise InconsistentChain("the root is axis-angle parameterised and takes no Euler ranges")

    @property
    def is_root(self):
        return self.parent is None

    @property
    def axes(self):
        return "".join(a for a in AXES if a in self.dofs)


class BodyModel:
    """Rest chain, joint ranges and the parameter layout of one subject."""

    def __init__(self, joints, global_term=DEFAULT_GLOBAL_TERM, root_angle_bound=np.pi,
                 lengths=None):
        self.joints = tuple(joints)
        self.lengths = dict(lengths) if lengths else None
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise InconsistentChain("duplicate joint names")
        self.index = {n: i for i, n in enumerate(names)}
        parents = []
        for j in self.joints:
            if j.parent is None:
                parents.append(WORLD)
            elif j.parent not in self.index:
                raise InconsistentChain(f"{j.name}: unknown parent {j.parent!r}")
            else:
                parents.append(self.index[j.parent])
        self.hierarchy = Hierarchy(tuple(parents))
        self.chain = KinematicChain(
            tuple(Transform(np.asarray(j.rest_rotation, float), np.asarray(j.offset, float))
                  for j in self.joints),
            self.hierarchy)
        self.root_angle_bound = float(root_angle_bound)
        if not 0 < self.root_angle_bound <= np.pi:
            raise InconsistentChain("root angle bound must lie in (0, pi]")

        self.reorientable = tuple(i for i, j in enumerate(self.joints) if j.is_root or j.dofs)
        names_out, lo, hi, owner = [], [], [], []
        euler_node, euler_axis, euler_param = [], [], []
        self.joint_slices = {}
        for ordinal, i in enumerate(self.reorientable):
            j = self.joints[i]
            start = len(names_out)
            if j.is_root:
                for p in ROOT_PARAMS:
                    names_out.append(f"{j.name}.{p}")
                lo += [-1.0, -1.0, -1.0, -self.root_angle_bound]
                hi += [1.0, 1.0, 1.0, self.root_angle_bound]
                owner += [ordinal] * 4
            else:
                for axis in j.axes:
                    euler_node.append(i)
                    euler_axis.append(AXES.index(axis))
                    euler_param.append(len(names_out))
                    names_out.append(f"{j.name}.{axis}")
                    lo.append(float(j.dofs[axis][0]))
                    hi.append(float(j.dofs[axis][1]))
                    owner.append(ordinal)
            self.joint_slices[j.name] = slice(start, len(names_out))
        self.param_names = tuple(names_out)
        self._bounds = np.column_stack([lo, hi])
        self._bounds.flags.writeable = False
        self.param_owner = np.asarray(owner)
        self._euler_node = np.asarray(euler_node, dtype=int)
        self._euler_axis = np.asarray(euler_axis, dtype=int)
        self._euler_param = np.asarray(euler_param, dtype=int)
        self.root = 0

        self.keypoints = tuple(j.keypoint for j in self.joints if j.keypoint)
        if len(set(self.keypoints)) != len(self.keypoints):
            raise InconsistentChain("a keypoint is bound to two joints")
        self.keypoint_nodes = np.asarray([i for i, j in enumerate(self.joints) if j.keypoint])
        kp_col = {i: k for k, i in enumerate(self.keypoint_nodes)}
        # a link is bound when both of its end joints have keypoints
        links = [(i, p) for i, p in enumerate(parents)
                 if p != WORLD and i in kp_col and p in kp_col]
        self.local_links = np.asarray([(c, p) for c, p in links], dtype=int).reshape(-1, 2)
        self.local_link_keypoints = np.asarray([(kp_col[c], kp_col[p]) for c, p in links],
                                               dtype=int).reshape(-1, 2)
        self.global_term = tuple(global_term)
        for name in self.global_term:
            if name not in self.index or self.index[name] not in kp_col:
                raise InconsistentChain(f"global term joint {name!r} has no keypoint")
        if self.root not in kp_col:
            raise InconsistentChain("the root joint needs a keypoint")
        self.global_nodes = np.asarray([self.index[n] for n in self.global_term], dtype=int)
        self.global_keypoints = np.asarray([kp_col[self.index[n]] for n in self.global_term],
                                           dtype=int)
        self.root_keypoint = kp_col[self.root]

    # -- parameter layout -------------------------------------------------
    @property
    def n_params(self):
        return len(self.param_names)

    @property
    def n_dofs(self):
        """Rotational degrees of freedom (the root counts three)."""
        return 3 + len(self._euler_param)

    def bounds(self):
        return self._bounds.copy()

    def rest_params(self):
        theta = np.zeros(self.n_params)
        theta[2] = 1.0
        return theta

    def param_index(self, joint, axis):
        j = self.joints[self.index[joint]]
        return self.joint_slices[joint].start + j.axes.index(axis)

    def check_bounds(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise InconsistentChain(f"expected {self.n_params} parameters, got {theta.shape[-1]}")
        lo, hi = self._bounds[:, 0], self._bounds[:, 1]
        bad = np.argwhere((theta < lo - _BOUND_TOL) | (theta > hi + _BOUND_TOL) | ~np.isfinite(theta))
        if len(bad):
            k = int(bad[0][-1])
            raise OutOfBounds(k, float(theta[tuple(bad[0])]), lo[k], hi[k])

    # -- kinematics -------------------------------------------------------
    def deltas(self, theta):
        """Per-joint delta rotations ``(..., N, 3, 3)`` for parameters ``(..., P)``."""
        theta = np.asarray(theta, dtype=float)
        batch = theta.shape[:-1]
        euler = np.zeros(batch + (len(self.joints), 3))
        euler[..., self._euler_node, self._euler_axis] = theta[..., self._euler_param]
        D = euler_xyz_to_matrix(euler)
        n = theta[..., 0:3]
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        axis = np.where(norm > 1e-12, n / np.where(norm > 1e-12, norm, 1.0), [1.0, 0.0, 0.0])
        D[..., self.root, :, :] = rodrigues(axis, theta[..., 3])
        return D

    def forward(self, theta):
        """Batched global rotations and positions for parameters ``(..., P)``."""
        return fk_arrays(self.chain.rotations, self.chain.translations,
                         self.hierarchy.parents, self.deltas(theta))

    def rest_pose(self):
        rot, pos = fk_arrays(self.chain.rotations, self.chain.translations, self.hierarchy.parents)
        return GlobalPose(rot, pos)

    def keypoint_positions(self, theta):
        """Keypoint positions ``(..., K, 3)`` in ``self.keypoints`` order."""
        _, pos = self.forward(theta)
        return pos[..., self.keypoint_nodes, :]

    def describe(self):
        """Plain-dict form of the body, the payload of a body config file."""
        joints = []
        for j in self.joints:
            joints.append({
                "name": j.name,
                "parent": j.parent,
                "offset": [float(x) for x in j.offset],
                "rest_rotation": [[float(x) for x in row] for row in j.rest_rotation],
                "dofs": {a: [float(j.dofs[a][0]), float(j.dofs[a][1])] for a in j.axes},
                "keypoint": j.keypoint,
            })
        return {"joints": joints, "global_term": list(self.global_term),
                "root_angle_bound": self.root_angle_bound}


def apply_params(body, theta):
    """Global pose of ``body`` reoriented by the parameter vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    body.check_bounds(theta)
    rot, pos = body.forward(theta)
    return GlobalPose(rot, pos)


def bounds(body):
    return body.bounds()


def _rot_z_pi():
    return np.diag([-1.0, -1.0, 1.0])


def default_body(limb_lengths=None, rom=None):
    """Standard adult chain built from ``limb_lengths`` (meters, see ``DEFAULT_LENGTHS``)."""
    L = dict(DEFAULT_LENGTHS)
    if limb_lengths:
        unknown = set(limb_lengths) - set(L)
        if unknown:
            raise InvalidLength(f"unknown limb length keys: {sorted(unknown)}")
        L.update(limb_lengths)
    for k, v in L.items():
        if not np.isfinite(v) or v <= 0:
            raise InvalidLength(f"{k} must be positive, got {v}")
    rom = {**DEFAULT_ROM, **(rom or {})}

    half = L["pelvis_width"] / 2
    chest = 2 * L["spine"] + L["neck"]
    flip = _rot_z_pi()
    eye = np.eye(3)
    # name, parent, global rest position, global rest frame, keypoint
    layout = [
        ("root", None, (0, 0, 0), eye, "pelvis"),
        ("l_hip", "root", (-half, 0, 0), eye, "l_hip"),
        ("r_hip", "root", (half, 0, 0), eye, "r_hip"),
        ("l_knee", "l_hip", (-half, 0, -L["thigh"]), flip, "l_knee"),
        ("r_knee", "r_hip", (half, 0, -L["thigh"]), flip, "r_knee"),
        ("l_ankle", "l_knee", (-half, 0, -L["thigh"] - L["shank"]), flip, "l_ankle"),
        ("r_ankle", "r_knee", (half, 0, -L["thigh"] - L["shank"]), flip, "r_ankle"),
        ("lower_spine", "root", (0, 0, L["spine"]), flip, None),
        ("mid_spine", "lower_spine", (0, 0, 2 * L["spine"]), flip, "mid_spine"),
        ("neck", "mid_spine", (0, 0, chest), flip, "neck"),
        ("head", "neck", (0, 0, chest + L["head"]), flip, "head"),
        ("l_clavicle", "mid_spine", (0, 0, chest), eye, None),
        ("r_clavicle", "mid_spine", (0, 0, chest), eye, None),
        ("l_shoulder", "l_clavicle", (-L["clavicle"], 0, chest), eye, "l_shoulder"),
        ("r_shoulder", "r_clavicle", (L["clavicle"], 0, chest), eye, "r_shoulder"),
        ("l_elbow", "l_shoulder", (-L["clavicle"], 0, chest - L["upper_arm"]), eye, "l_elbow"),
        ("r_elbow", "r_shoulder", (L["clavicle"], 0, chest - L["upper_arm"]), eye, "r_elbow"),
        ("l_wrist", "l_elbow", (-L["clavicle"], 0, chest - L["upper_arm"] - L["forearm"]),
         eye, "l_wrist"),
        ("r_wrist", "r_elbow", (L["clavicle"], 0, chest - L["upper_arm"] - L["forearm"]),
         eye, "r_wrist"),
    ]
    glob = {name: (np.asarray(p, float), R) for name, _, p, R, _ in layout}
    joints = []
    for name, parent, p, R, kp in layout:
        if parent is None:
            offset, local = np.asarray(p, float), R
        else:
            pp, pR = glob[parent]
            offset = pR.T @ (np.asarray(p, float) - pp)
            local = pR.T @ R
        joints.append(JointSpec(
            name=name, parent=parent,
            offset=tuple(float(x) for x in offset),
            rest_rotation=tuple(tuple(float(x) for x in row) for row in local),
            dofs={a: tuple(r) for a, r in rom.get(name, {}).items()},
            keypoint=kp))
    return BodyModel(joints, lengths=L)


def body_from_dict(data):
    """Inverse of :meth:`BodyModel.describe`."""
    joints = []
    for j in data["joints"]:
        joints.append(JointSpec(
            name=j["name"], parent=j.get("parent"),
            offset=tuple(float(x) for x in j["offset"]),
            rest_rotation=tuple(tuple(float(x) for x in row)
                                for row in j.get("rest_rotation", np.eye(3).tolist())),
            dofs={a: (float(r[0]), float(r[1])) for a, r in (j.get("dofs") or {}).items()},
            keypoint=j.get("keypoint")))
    return BodyModel(joints,
                     global_term=tuple(data.get("global_term", DEFAULT_GLOBAL_TERM)),
                     root_angle_bound=float(data.get("root_angle_bound", np.pi)))
