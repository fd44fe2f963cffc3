import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from posechain.errors import InconsistentChain, ZeroLengthLink
from posechain.kinematics import (
    WORLD,
    Hierarchy,
    KinematicChain,
    Transform,
    fk,
    fk_product,
    fk_reoriented,
    link_directions,
)


def rot_x(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_z(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0], [0, 0, 1]])


def serial(offsets, root_rot=np.eye(3)):
    """Root at the origin followed by one link per offset."""
    ts = [Transform(root_rot, np.zeros(3))] + [Transform(np.eye(3), np.array(o, float))
                                               for o in offsets]
    return KinematicChain(ts, Hierarchy((WORLD,) + tuple(range(len(offsets)))))


def random_chain(rng, n):
    parents = (WORLD,) + tuple(int(rng.integers(0, j)) for j in range(1, n))
    rots = Rotation.random(n, random_state=rng).as_matrix()
    trans = rng.normal(size=(n, 3))
    return KinematicChain([Transform(r, t) for r, t in zip(rots, trans)], Hierarchy(parents))


def homogeneous_product(chain, j, deltas=None):
    """Independent oracle: multiply 4x4 local matrices root-first along the path."""
    path = []
    while j != WORLD:
        path.append(j)
        j = chain.hierarchy.parents[j]
    T = np.eye(4)
    for i in reversed(path):
        L = np.eye(4)
        R = chain.transforms[i].rotation
        L[:3, :3] = R if deltas is None else R @ deltas[i]
        L[:3, 3] = chain.transforms[i].translation
        T = T @ L
    return T


def test_single_identity_joint():
    chain = KinematicChain([Transform.identity()], Hierarchy((WORLD,)))
    gp = fk(chain)
    np.testing.assert_array_equal(gp.rotations[0], np.eye(3))
    np.testing.assert_array_equal(gp.positions[0], np.zeros(3))


def test_two_link_straight():
    gp = fk(serial([(0, 0, 1), (0, 0, 1)]))
    np.testing.assert_allclose(gp.positions[2], [0, 0, 2])


def test_two_link_root_rotated_about_x():
    gp = fk(serial([(0, 0, 1), (0, 0, 1)], root_rot=rot_x(np.pi / 2)))
    np.testing.assert_allclose(gp.positions[2], [0, -2, 0], atol=1e-15)


def test_identity_deltas_match_fk():
    rng = np.random.default_rng(0)
    chain = random_chain(rng, 8)
    a, b = fk(chain), fk_reoriented(chain, chain.hierarchy, np.tile(np.eye(3), (8, 1, 1)))
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.rotations, b.rotations)


def test_root_delta_rotates_down_chain():
    chain = serial([(1, 0, 0), (1, 0, 0)])
    deltas = np.tile(np.eye(3), (3, 1, 1))
    deltas[0] = rot_z(np.pi / 2)
    gp = fk_reoriented(chain, chain.hierarchy, deltas)
    np.testing.assert_allclose(gp.positions[1:], [[0, 1, 0], [0, 2, 0]], atol=1e-15)


def test_leaf_delta_changes_only_leaf_orientation():
    chain = serial([(1, 0, 0), (0, 1, 0)])
    deltas = np.tile(np.eye(3), (3, 1, 1))
    deltas[2] = rot_x(0.7)
    base, moved = fk(chain), fk_reoriented(chain, chain.hierarchy, deltas)
    np.testing.assert_array_equal(base.positions, moved.positions)
    np.testing.assert_array_equal(base.rotations[:2], moved.rotations[:2])
    assert not np.allclose(base.rotations[2], moved.rotations[2])


def test_delta_is_right_composed():
    chain = serial([(0, 0, 1), (0, 0, 1)], root_rot=rot_x(0.4))
    deltas = np.tile(np.eye(3), (3, 1, 1))
    deltas[0] = rot_z(0.9)
    gp = fk_reoriented(chain, chain.hierarchy, deltas)
    np.testing.assert_allclose(gp.rotations[0], rot_x(0.4) @ rot_z(0.9))


def test_straight_chain_directions():
    gp = fk(serial([(0, 0, 0.5)] * 4))
    dirs = link_directions(gp, serial([(0, 0, 0.5)] * 4).hierarchy)
    assert np.isnan(dirs[0]).all()
    np.testing.assert_allclose(dirs[1:], np.tile([0, 0, 1], (4, 1)))


def test_l_shaped_directions():
    chain = serial([(0, 0, 2), (3, 0, 0)])
    np.testing.assert_allclose(link_directions(fk(chain), chain.hierarchy)[1:],
                               [[0, 0, 1], [1, 0, 0]])


def test_directions_follow_up_chain_delta():
    chain = serial([(0, 0, 1), (0, 0, 1)])
    deltas = np.tile(np.eye(3), (3, 1, 1))
    deltas[1] = rot_x(np.pi / 2)
    dirs = link_directions(fk_reoriented(chain, chain.hierarchy, deltas), chain.hierarchy)
    np.testing.assert_allclose(dirs[1:], [[0, 0, 1], [0, -1, 0]], atol=1e-15)


def test_mismatched_lengths_rejected():
    with pytest.raises(InconsistentChain):
        KinematicChain([Transform.identity()], Hierarchy((WORLD, 0)))
    chain = serial([(0, 0, 1)])
    with pytest.raises(InconsistentChain):
        fk(chain, Hierarchy((WORLD, 0, 1)))
    with pytest.raises(InconsistentChain):
        fk_reoriented(chain, chain.hierarchy, np.tile(np.eye(3), (5, 1, 1)))


def test_hierarchy_validation():
    with pytest.raises(InconsistentChain):
        Hierarchy((0, WORLD))
    with pytest.raises(InconsistentChain):
        Hierarchy((WORLD, WORLD))
    with pytest.raises(InconsistentChain):
        Hierarchy((WORLD, 2, 0))


def test_zero_link_rejected():
    with pytest.raises(ZeroLengthLink):
        serial([(0, 0, 1), (0, 0, 0)])


def test_improper_rotation_rejected():
    with pytest.raises(InconsistentChain):
        KinematicChain([Transform(np.diag([1.0, 1, -1]), np.zeros(3))], Hierarchy((WORLD,)))


def test_hierarchy_queries():
    h = Hierarchy((WORLD, 0, 1, 0, 3))
    assert h.children(0) == [1, 3]
    assert h.path_to_root(2) == [2, 1, 0]
    assert h.descendants(3) == {3, 4}


def test_packaged_product_agrees_with_test_oracle():
    rng = np.random.default_rng(7)
    chain = random_chain(rng, 6)
    deltas = Rotation.random(6, random_state=rng).as_matrix()
    for j in range(6):
        np.testing.assert_allclose(fk_product(chain, chain.hierarchy, j, deltas),
                                   homogeneous_product(chain, j, deltas), atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_incremental_equals_product(n, seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n)
    deltas = Rotation.random(n, random_state=rng).as_matrix()
    gp = fk_reoriented(chain, chain.hierarchy, deltas)
    for j in range(n):
        T = homogeneous_product(chain, j, deltas)
        assert np.abs(gp.rotations[j] - T[:3, :3]).max() < 1e-12
        assert np.abs(gp.positions[j] - T[:3, 3]).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_link_lengths_preserved(n, seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n)
    gp = fk_reoriented(chain, chain.hierarchy, Rotation.random(n, random_state=rng).as_matrix())
    parents = np.array(chain.hierarchy.parents[1:])
    lengths = np.linalg.norm(gp.positions[1:] - gp.positions[parents], axis=1)
    np.testing.assert_allclose(lengths, chain.link_lengths()[1:], atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**32 - 1))
def test_delta_only_moves_descendants(n, seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n)
    j = int(rng.integers(0, n))
    deltas = np.tile(np.eye(3), (n, 1, 1))
    deltas[j] = Rotation.random(random_state=rng).as_matrix()
    base, moved = fk(chain), fk_reoriented(chain, chain.hierarchy, deltas)
    still = [i for i in range(n) if i not in chain.hierarchy.descendants(j)]
    np.testing.assert_array_equal(base.rotations[still], moved.rotations[still])
    np.testing.assert_array_equal(base.positions[still], moved.positions[still])
