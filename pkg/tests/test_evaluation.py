import numpy as np
import pytest

from posechain.bodymodel import LOWER_LIMB, default_body
from posechain.errors import LengthMismatch
from posechain.evaluation import (
    EvalReport,
    RunRecord,
    mpjas,
    mpjas_per_joint,
    run_experiment,
)
from posechain.motiongen import MotionSpec, generate
from posechain.rotmath import axis_angle_to_matrix

BODY = default_body()


def random_thetas(rng, n):
    b = BODY.bounds()
    theta = rng.uniform(b[:, 0], b[:, 1], size=(n, len(b)))
    theta[:, 2] = np.where(np.abs(theta[:, 2]) < 0.1, 0.5, theta[:, 2])
    return theta


def test_self_distance_is_exactly_zero():
    X = random_thetas(np.random.default_rng(0), 5)
    assert mpjas(X, X, BODY) == 0.0
    assert mpjas(X, X, BODY, relative="local") == 0.0


def test_one_leaf_joint_offset():
    gt = random_thetas(np.random.default_rng(1), 4)
    gt[:, BODY.param_index("r_elbow", "X")] = 1.0
    pred = gt.copy()
    pred[:, BODY.param_index("r_elbow", "X")] += 0.14
    assert mpjas(pred, gt, BODY) == pytest.approx(0.01, abs=1e-14)
    assert mpjas(pred, gt, BODY, joints=["r_elbow"]) == pytest.approx(0.14, abs=1e-14)


def test_lower_limb_subset_isolates_legs():
    rng = np.random.default_rng(2)
    gt = random_thetas(rng, 3)
    pred = gt.copy()
    pred[:, BODY.param_index("l_shoulder", "Z")] *= 0.5
    assert mpjas(pred, gt, BODY, joints=LOWER_LIMB) == 0.0
    assert mpjas(pred, gt, BODY) > 0.0
    pred = gt.copy()
    pred[:, BODY.param_index("l_knee", "X")] *= 0.5
    assert mpjas(pred, gt, BODY, joints=LOWER_LIMB) > 0.0


def test_global_comparison_accumulates_down_chain():
    gt = random_thetas(np.random.default_rng(3), 2)
    pred = gt.copy()
    pred[:, BODY.param_index("l_hip", "Y")] += 0.1
    pj = mpjas_per_joint(pred, gt, BODY)
    assert pj["l_hip"] == pytest.approx(0.1, abs=1e-12)
    assert pj["l_knee"] == pytest.approx(0.1, abs=1e-12)
    local = mpjas_per_joint(pred, gt, BODY, relative="local")
    assert local["l_knee"] == pytest.approx(0.0, abs=1e-12)


def test_invariant_to_shared_root_rotation():
    rng = np.random.default_rng(4)
    gt, pred = random_thetas(rng, 3), random_thetas(rng, 3)
    # a world rotation applied to both roots: compose it into the root axis-angle
    W = axis_angle_to_matrix(np.array([0.3, -0.5, 0.81]) / np.linalg.norm([0.3, -0.5, 0.81]), 0.9)
    from posechain.rotmath import matrix_to_axis_angle

    def turned(X):
        Y = X.copy()
        for m in range(len(X)):
            n = X[m, :3] / np.linalg.norm(X[m, :3])
            aa = matrix_to_axis_angle(W @ axis_angle_to_matrix(n, X[m, 3]))
            Y[m, :3], Y[m, 3] = aa.axis, aa.angle
        return Y

    assert mpjas(turned(pred), turned(gt), BODY) == pytest.approx(mpjas(pred, gt, BODY), abs=1e-9)


def test_validation():
    X = random_thetas(np.random.default_rng(5), 3)
    with pytest.raises(LengthMismatch):
        mpjas(X, X[:2], BODY)
    with pytest.raises(ValueError):
        mpjas(X, X, BODY, joints=[])
    with pytest.raises(ValueError):
        mpjas(X, X, BODY, relative="parent")


def record(alg, tier, mode, value, frames=30, seconds=1.0, iterations=10):
    return RunRecord(alg, f"{tier}-{mode}", tier, mode, frames, value, value / 10,
                     {"l_knee": value, "l_clavicle": 2 * value, "r_knee": value,
                      "r_clavicle": 2 * value}, seconds, iterations, True, True, True)


def test_report_aggregation_weighted_by_counts():
    runs = [record("1a", "a", "bent", 0.1), record("1a", "a", "phased", 0.3),
            record("1a", "b", "bent", 0.2), record("1a", "c", "bent", 0.05),
            record("1a", "c", "phased", 0.07), record("1a", "c", "bent", 0.4)]
    rep = EvalReport(runs, ["1a"])
    t1 = rep.table1()["1a"]
    weighted = sum(t1[t]["E"] * t1[t]["n"] for t in "abc") / sum(t1[t]["n"] for t in "abc")
    assert abs(t1["average"]["E"] - weighted) <= 1e-12
    assert t1["a"]["fps"] == pytest.approx(30.0)
    assert rep.table2()["1a"]["phased"] == pytest.approx(0.185)


def test_report_values_nonnegative_and_serialisable():
    runs = [record(a, t, m, 0.01 * (i + 1)) for i, (a, t, m) in enumerate(
        (a, t, m) for a in ("1a", "2_5") for t in "abc" for m in ("bent", "phased"))]
    d = EvalReport(runs, ["1a", "2_5"]).to_dict()
    assert set(d["table1"]) == {"1a", "2_5"}
    assert all(set(row) == {"a", "b", "c", "average"} for row in d["table1"].values())
    for row in d["table1"].values():
        for cell in row.values():
            assert cell["E"] >= 0 and cell["fps"] > 0
    assert any(c["check"].startswith("phased") for c in d["checks"])


def test_run_experiment_small_end_to_end():
    suite = [generate(MotionSpec(frames=6, tier="c", mode="bent", seed=1), BODY)]
    rep = run_experiment(suite, algorithms=("1a", "1b", "2_3"), body=BODY)
    assert {r.algorithm for r in rep.runs} == {"1a", "1b", "2_3"}
    assert not rep.failures
    for r in rep.runs:
        assert r.mpjas >= 0 and r.fps > 0 and r.feasible and r.monotone
    assert "checks" in rep.summary()


def test_failures_are_collected_not_raised():
    # a single frame cannot be run temporally; the frame-by-frame run still lands
    suite = [generate(MotionSpec(frames=1, tier="a", mode="bent", seed=0), BODY)]
    rep = run_experiment(suite, algorithms=("1a", "2_5"), body=BODY)
    assert [r.algorithm for r in rep.runs] == ["1a"]
    assert rep.failures[0]["algorithm"] == "2_5"
    assert ("every run completed", False) in rep.checks()


def test_unknown_algorithm_rejected():
    with pytest.raises(ValueError):
        run_experiment([], algorithms=("3",))


@pytest.fixture(scope="module")
def phased_frame_by_frame():
    from posechain.motiongen import suite_specs
    from posechain.solver import ik_sequence_frame_by_frame

    suite = [generate(s, BODY) for s in suite_specs(0) if s.mode == "phased"]
    return [(ik_sequence_frame_by_frame(BODY, g.poses).thetas, g.thetas) for g in suite]


def mean_pair(runs, relative, joint):
    pj = [mpjas_per_joint(p, g, BODY, relative) for p, g in runs]
    return float(np.mean([(d[f"l_{joint}"] + d[f"r_{joint}"]) / 2 for d in pj]))


def test_phased_clavicles_worse_than_knees(phased_frame_by_frame):
    knee = mean_pair(phased_frame_by_frame, "global", "knee")
    clavicle = mean_pair(phased_frame_by_frame, "global", "clavicle")
    print(f"global orientations: knee {knee:.4f} clavicle {clavicle:.4f}")
    assert clavicle > knee


def test_phased_clavicles_worse_than_knees_parent_relative(phased_frame_by_frame):
    knee = mean_pair(phased_frame_by_frame, "local", "knee")
    clavicle = mean_pair(phased_frame_by_frame, "local", "clavicle")
    assert clavicle > knee
