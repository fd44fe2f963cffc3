import json

import numpy as np
import pytest

from posechain import fileio
from posechain.bodymodel import LIMB_FLEXION, default_body
from posechain.cli import main
from posechain.losses import frame_targets
from posechain.motiongen import PHASE_SCHEDULE, SPEED_TIERS

BODY = default_body()


def run(*argv):
    return main([str(a) for a in argv])


def link_errors(thetas, kp):
    out = []
    for theta, frame in zip(thetas, kp):
        local_t, _ = frame_targets(BODY, frame)
        _, pos = BODY.forward(theta)
        links = BODY.local_links
        r = pos[links[:, 0]] - pos[links[:, 1]]
        r /= np.linalg.norm(r, axis=1, keepdims=True)
        out.append(np.arccos(np.clip(np.sum(r * local_t, axis=1), -1, 1)))
    return np.array(out)


@pytest.fixture(scope="module")
def bent_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("generate", "--speed", "c", "--mode", "bent", "--frames", 8, "--seed", 3,
               "--out", out) == 0
    return out, out / "c-bent-3.poses.json", out / "c-bent-3.angles.json"


def test_generate_is_deterministic(tmp_path):
    for d in ("one", "two"):
        assert run("generate", "--seed", 7, "--frames", 10, "--out", tmp_path / d) == 0
    a = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert a == ["a-bent-7.angles.json", "a-bent-7.poses.json", "body.json"]
    for name in a:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_generate_suite_writes_all_pairs(tmp_path):
    assert run("generate", "--suite", "--frames", 30, "--out", tmp_path) == 0
    poses = sorted(tmp_path.glob("*.poses.json"))
    angles = sorted(tmp_path.glob("*.angles.json"))
    assert len(poses) == len(angles) == 24
    for tier in SPEED_TIERS:
        assert len(list(tmp_path.glob(f"{tier}-phased-*.poses.json"))) == 4


def test_generated_phased_follows_schedule(tmp_path):
    assert run("generate", "--speed", "b", "--mode", "phased", "--seed", 2, "--out", tmp_path) == 0
    ang = fileio.read_angles(tmp_path / "b-phased-2.angles.json", BODY)
    assert ang.provenance["algorithm"] == "ground-truth"
    assert ang.provenance["body_sha256"] == fileio.body_hash(BODY)
    flex = ang.thetas[:, [BODY.param_index(j, "X") for j in LIMB_FLEXION]]
    start = 0
    for k, n in enumerate(PHASE_SCHEDULE):
        block = flex[start:start + n]
        assert np.all(block == 0.0) if k % 2 == 0 else np.all(block > 0.0)
        start += n
    assert np.abs(np.diff(ang.thetas, axis=0)).max() <= SPEED_TIERS["b"] + 1e-12


def test_retarget_round_trip(tmp_path, bent_files, capsys):
    _, poses, _ = bent_files
    out = tmp_path / "pred.json"
    assert run("retarget", poses, "--out", out) == 0
    ang = fileio.read_angles(out, BODY)
    assert ang.provenance["algorithm"] == "temporal"
    assert ang.provenance["M"] == 5 and ang.provenance["lambda"] == 0.5
    kp = fileio.read_poses(poses).for_body(BODY)
    assert link_errors(ang.thetas, kp).max() < 1e-3
    assert "wrote 8 frames" in capsys.readouterr().out


def test_retarget_lambda_from_speed(tmp_path, bent_files):
    _, poses, _ = bent_files
    out = tmp_path / "pred.json"
    assert run("retarget", poses, "--speed", "a", "--algorithm", "temporal", "--M", 3,
               "--out", out) == 0
    prov = fileio.read_angles(out).provenance
    assert prov["M"] == 3 and prov["lambda"] == 0.7


def test_evaluate_identical_is_zero(tmp_path, bent_files, capsys):
    _, _, angles = bent_files
    report = tmp_path / "r.json"
    assert run("evaluate", angles, angles, "--out", report) == 0
    doc = fileio.read_report(report)
    assert doc["mpjas"] == 0.0 and doc["lower_limb"] == 0.0
    assert "MPJAS 0.000000e+00" in capsys.readouterr().out


def test_missing_keypoint_is_validation_error(tmp_path, bent_files, capsys):
    _, poses, _ = bent_files
    doc = json.loads(poses.read_text())
    del doc["frames"][2]["r_wrist"]
    bad = tmp_path / "bad.json"
    fileio.write_document(bad, doc)
    assert run("retarget", bad, "--out", tmp_path / "x.json") == 1
    err = capsys.readouterr().err
    assert "frame 2" in err and "'r_wrist'" in err
    assert not (tmp_path / "x.json").exists()


def test_exit_codes(tmp_path, bent_files):
    _, poses, angles = bent_files
    assert run("evaluate", tmp_path / "nope.json", angles) == 3
    assert run("retarget", poses, "--M", 1, "--out", tmp_path / "x.json") == 1
    assert run("retarget", poses, "--out", tmp_path / "no" / "dir" / "x.json") == 3
    with pytest.raises(SystemExit) as info:
        run("retarget", poses, "--algorithm", "magic", "--out", tmp_path / "x.json")
    assert info.value.code == 1


def test_body_command(tmp_path):
    assert run("body", "--out", tmp_path / "b.json") == 0
    assert fileio.body_hash(fileio.read_body(tmp_path / "b.json")) == fileio.body_hash(BODY)


def test_small_bench_writes_report(tmp_path, capsys):
    assert run("bench", "--per-tier", 1, "--frames", 30, "--tiers", "c", "--algorithms", "1a", "1b",
               "--out", tmp_path) == 0
    doc = fileio.read_report(tmp_path / "report.json")
    assert set(doc["table1"]) == {"1a", "1b"}
    assert doc["table1"]["1a"]["c"]["n"] == 2
    assert (tmp_path / "summary.txt").read_text() == capsys.readouterr().out
    assert any(c["check"] == "every run completed" and c["passed"] for c in doc["checks"])
