"""Hierarchical kinematic chains and forward kinematics.

Each joint stores its rotation and translation relative to its parent (the
top-left block and last column of a homogeneous parent-child transform). A
global pose is the product of these transforms along the path to the root.
Reorientation deltas are right-multiplied onto a joint's local rotation, so
they move everything down-chain of the joint but never the joint itself.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentChain, ZeroLengthLink
from .rotmath import ORTHO_TOL, is_rotation_matrix

WORLD = -1


@dataclass(frozen=True)
class Transform:
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def matrix(self):
        """4x4 homogeneous form."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other):
        """``self @ other`` as rigid transforms."""
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)


@dataclass(frozen=True)
class Hierarchy:
    """Parent index for every joint; the root's parent is ``WORLD``.

    Joints are in topological order, so a parent always precedes its children.
    """
    parents: tuple

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        if not parents or parents[0] != WORLD:
            raise InconsistentChain("joint 0 must be the root")
        for j, p in enumerate(parents[1:], start=1):
            if p == WORLD:
                raise InconsistentChain(f"joint {j} is a second root")
            if not 0 <= p < j:
                raise InconsistentChain(f"joint {j} has parent {p}, which does not precede it")

    def __len__(self):
        return len(self.parents)

    def children(self, j):
        return [c for c, p in enumerate(self.parents) if p == j]

    def path_to_root(self, j):
        path = []
        while j != WORLD:
            path.append(j)
            j = self.parents[j]
        return path

    def descendants(self, j):
        out = {j}
        for c, p in enumerate(self.parents):
            if p in out:
                out.add(c)
        return out


@dataclass(frozen=True)
class KinematicChain:
    transforms: tuple
    hierarchy: Hierarchy
    _rotations: np.ndarray = field(init=False, repr=False, compare=False)
    _translations: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        transforms = tuple(self.transforms)
        object.__setattr__(self, "transforms", transforms)
        if len(transforms) != len(self.hierarchy):
            raise InconsistentChain(
                f"{len(transforms)} transforms for {len(self.hierarchy)} joints")
        for j, t in enumerate(transforms):
            if not is_rotation_matrix(t.rotation, tol=1e3 * ORTHO_TOL):
                raise InconsistentChain(f"joint {j} rotation is not proper orthonormal")
            if j > 0 and np.linalg.norm(t.translation) <= 0.0:
                raise ZeroLengthLink(f"joint {j} has zero link length")
        rot = np.stack([np.asarray(t.rotation, float) for t in transforms])
        trans = np.stack([np.asarray(t.translation, float) for t in transforms])
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "_rotations", rot)
        object.__setattr__(self, "_translations", trans)

    def __len__(self):
        return len(self.transforms)

    @property
    def rotations(self):
        return self._rotations

    @property
    def translations(self):
        return self._translations

    def link_lengths(self):
        return np.linalg.norm(self._translations, axis=1)


@dataclass(frozen=True)
class GlobalPose:
    """Global rotations ``(N, 3, 3)`` and positions ``(N, 3)`` of every joint."""
    rotations: np.ndarray
    positions: np.ndarray

    def __len__(self):
        return len(self.positions)

    def transform(self, j):
        return Transform(self.rotations[j], self.positions[j])


def fk_arrays(rotations, translations, parents, deltas=None):
    """Batched forward kinematics.

    ``rotations`` and ``translations`` are the local rest transforms, shaped
    ``(N, 3, 3)`` and ``(N, 3)``; ``deltas`` optionally holds per-joint
    reorientations with shape ``(..., N, 3, 3)``. Returns global rotations and
    positions with the deltas' batch shape. Each joint reuses its parent's
    cached global transform, so cost is linear in the joint count.
    """
    n = len(parents)
    if deltas is None:
        local = rotations
        batch = ()
    else:
        deltas = np.asarray(deltas, dtype=float)
        if deltas.shape[-3:] != (n, 3, 3):
            raise InconsistentChain(f"expected {n} delta rotations, got shape {deltas.shape}")
        local = rotations @ deltas
        batch = deltas.shape[:-3]
    g_rot = np.empty(batch + (n, 3, 3))
    g_pos = np.empty(batch + (n, 3))
    for j in range(n):
        p = parents[j]
        if p == WORLD:
            g_rot[..., j, :, :] = local[..., j, :, :]
            g_pos[..., j, :] = translations[j]
        else:
            parent_rot = g_rot[..., p, :, :]
            g_rot[..., j, :, :] = parent_rot @ local[..., j, :, :]
            g_pos[..., j, :] = parent_rot @ translations[j] + g_pos[..., p, :]
    return g_rot, g_pos


def _check(chain, h):
    if len(chain) != len(h) or chain.hierarchy.parents != h.parents:
        raise InconsistentChain("chain and hierarchy disagree")


def fk(chain, h=None):
    """Global transforms of every joint of ``chain``."""
    h = chain.hierarchy if h is None else h
    _check(chain, h)
    rot, pos = fk_arrays(chain.rotations, chain.translations, h.parents)
    return GlobalPose(rot, pos)


def fk_reoriented(chain, h, deltas):
    """Forward kinematics with each local rotation right-composed with its delta."""
    h = chain.hierarchy if h is None else h
    _check(chain, h)
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (len(chain), 3, 3):
        raise InconsistentChain(f"expected {len(chain)} delta rotations, got shape {deltas.shape}")
    rot, pos = fk_arrays(chain.rotations, chain.translations, h.parents, deltas)
    return GlobalPose(rot, pos)


def fk_product(chain, h, j, deltas=None):
    """Global transform of joint ``j`` as an explicit product of 4x4 matrices.

    Slow reference path used to check :func:`fk`; walks root-first along the
    path to ``j`` and multiplies homogeneous matrices in order.
    """
    T = np.eye(4)
    for i in reversed(h.path_to_root(j)):
        local = chain.transforms[i].matrix()
        if deltas is not None:
            D = np.eye(4)
            D[:3, :3] = deltas[i]
            local = local @ D
        T = T @ local
    return T


def link_directions(gp, h):
    """Unit vectors from each joint's parent to the joint, in the global frame.

    Returns an ``(N, 3)`` array; the root row is NaN since it has no link.
    """
    pos = np.asarray(gp.positions)
    out = np.full(pos.shape, np.nan)
    for j, p in enumerate(h.parents):
        if p == WORLD:
            continue
        v = pos[j] - pos[p]
        norm = np.linalg.norm(v)
        if norm <= 0.0:
            raise ZeroLengthLink(f"joint {j} coincides with its parent")
        out[j] = v / norm
    return out
