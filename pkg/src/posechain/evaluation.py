"""Angular-separation metrics and the benchmark runner.

MPJAS (mean per-joint angular separation) averages, over frames, the mean
over joints of the geodesic angle between predicted and ground-truth joint
orientations. Orientations are global (world frame) by default, which lets
errors accumulate down the chain; ``relative="local"`` compares each joint
relative to its parent instead.
"""
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bodymodel import LOWER_LIMB, default_body
from .errors import LengthMismatch, PoseChainError
from .motiongen import SPEED_TIERS
from .rotmath import relative_angle
from .solver import LAMBDA_BY_TIER, OptimizerSettings, ik_sequence_frame_by_frame, ik_sequence_temporal

# label -> (driver, patch length)
ALGORITHM_SPECS = {
    "1a": ("frame", None),
    "1b": ("frame-warm", None),
    "2_3": ("temporal", 3),
    "2_5": ("temporal", 5),
}

BAND_ALL = 0.15
BAND_BEST = 0.10
LOWER_LIMB_BAND = 1e-2


def joint_orientations(body, thetas, relative="global"):
    """Orientations ``(F, J, 3, 3)`` of the reorientable joints."""
    rot, _ = body.forward(np.asarray(thetas, dtype=float))
    nodes = np.asarray(body.reorientable)
    if relative == "global":
        return rot[..., nodes, :, :]
    if relative != "local":
        raise ValueError(f"relative must be 'global' or 'local', not {relative!r}")
    parents = np.asarray([max(body.hierarchy.parents[i], 0) for i in nodes])
    out = np.swapaxes(rot[..., parents, :, :], -1, -2) @ rot[..., nodes, :, :]
    out[..., 0, :, :] = rot[..., nodes[0], :, :]
    return out


def _subset(body, joints):
    names = [body.joints[i].name for i in body.reorientable]
    if joints is None:
        return list(range(len(names)))
    joints = list(joints)
    if not joints:
        raise ValueError("joint subset is empty")
    return [names.index(j) for j in joints]


def separation(pred, gt, body, relative="global"):
    """Per-frame, per-joint angular separation ``(F, J)`` in radians."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    gt = np.atleast_2d(np.asarray(gt, dtype=float))
    if pred.shape != gt.shape:
        raise LengthMismatch(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    return relative_angle(joint_orientations(body, pred, relative),
                          joint_orientations(body, gt, relative))


def mpjas(pred, gt, body, joints=None, relative="global"):
    """Mean over frames of the mean over ``joints`` of the angular separation."""
    cols = _subset(body, joints)
    return float(separation(pred, gt, body, relative)[:, cols].mean(axis=1).mean())


def mpjas_per_joint(pred, gt, body, relative="global"):
    """Separation of each reorientable joint averaged over frames, keyed by name."""
    sep = separation(pred, gt, body, relative).mean(axis=0)
    return {body.joints[i].name: float(v) for i, v in zip(body.reorientable, sep)}


@dataclass
class RunRecord:
    algorithm: str
    sequence: str
    tier: str
    mode: str
    frames: int
    mpjas: float
    lower_limb: float
    per_joint: dict
    seconds: float
    iterations: int
    converged: bool
    monotone: bool
    feasible: bool

    @property
    def fps(self):
        return self.frames / self.seconds if self.seconds > 0 else float("inf")


@dataclass
class EvalReport:
    runs: list
    algorithms: list
    machine: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def select(self, algorithm=None, tier=None, mode=None):
        return [r for r in self.runs
                if (algorithm is None or r.algorithm == algorithm)
                and (tier is None or r.tier == tier)
                and (mode is None or r.mode == mode)]

    def mean(self, attr="mpjas", **where):
        runs = self.select(**where)
        return float(np.mean([getattr(r, attr) for r in runs])) if runs else float("nan")

    def fps(self, **where):
        runs = self.select(**where)
        seconds = sum(r.seconds for r in runs)
        return sum(r.frames for r in runs) / seconds if seconds > 0 else float("nan")

    @property
    def tiers(self):
        return [t for t in SPEED_TIERS if any(r.tier == t for r in self.runs)]

    @property
    def modes(self):
        return [m for m in ("bent", "phased") if any(r.mode == m for r in self.runs)]

    def table1(self):
        """Per algorithm and speed tier: MPJAS over joints and optimisation fps."""
        out = {}
        for alg in self.algorithms:
            row = {t: {"E": self.mean(algorithm=alg, tier=t), "fps": self.fps(algorithm=alg, tier=t),
                       "n": len(self.select(algorithm=alg, tier=t))} for t in self.tiers}
            row["average"] = {"E": self.mean(algorithm=alg), "fps": self.fps(algorithm=alg),
                              "n": len(self.select(algorithm=alg))}
            out[alg] = row
        return out

    def table2(self):
        """Per algorithm: MPJAS for bent-only and for phased sequences."""
        return {alg: {m: self.mean(algorithm=alg, mode=m) for m in self.modes}
                for alg in self.algorithms}

    def per_joint(self):
        """Per algorithm and mode: each joint's separation averaged over runs."""
        out = {}
        for alg in self.algorithms:
            out[alg] = {}
            for m in self.modes:
                runs = self.select(algorithm=alg, mode=m)
                if not runs:
                    continue
                names = list(runs[0].per_joint)
                out[alg][m] = {n: float(np.mean([r.per_joint[n] for r in runs])) for n in names}
        return out

    def lower_limb(self):
        return {alg: {m: self.mean("lower_limb", algorithm=alg, mode=m) for m in self.modes}
                for alg in self.algorithms}

    def checks(self):
        """Ordering and band checks, each ``(description, passed)``."""
        out = []
        algs = self.algorithms
        t2 = self.table2()
        if {"1a", "2_5"} <= set(algs) and "phased" in self.modes:
            out.append(("phased: MPJAS(2_5) < MPJAS(1a)", t2["2_5"]["phased"] < t2["1a"]["phased"]))
        if "bent" in self.modes:
            vals = [t2[a]["bent"] for a in algs]
            out.append(("bent-only: all algorithms within 2x of each other",
                        max(vals) <= 2 * min(vals)))
        if "1a" in algs and {"bent", "phased"} <= set(self.modes):
            out.append(("1a: bent-only MPJAS <= phased MPJAS", t2["1a"]["bent"] <= t2["1a"]["phased"]))
        if "1a" in algs and "phased" in self.modes:
            pj = self.per_joint()["1a"]["phased"]
            clav = np.mean([pj["l_clavicle"], pj["r_clavicle"]])
            knee = np.mean([pj["l_knee"], pj["r_knee"]])
            out.append(("1a phased: clavicle MPJAS > knee MPJAS", bool(clav > knee)))
        out.append((f"every algorithm: MPJAS < {BAND_ALL}",
                    all(self.mean(algorithm=a) < BAND_ALL for a in algs)))
        if "2_5" in algs:
            out.append((f"2_5: average MPJAS < {BAND_BEST}", self.mean(algorithm="2_5") < BAND_BEST))
            if "bent" in self.modes:
                out.append((f"2_5 bent-only: hips+knees MPJAS < {LOWER_LIMB_BAND}",
                            self.lower_limb()["2_5"]["bent"] < LOWER_LIMB_BAND))
        if {"1a", "1b"} <= set(algs) and "a" in self.tiers:
            it_a = sum(r.iterations for r in self.select(algorithm="1a", tier="a"))
            it_b = sum(r.iterations for r in self.select(algorithm="1b", tier="a"))
            out.append(("slow tier: 1b iterations <= 1a iterations", it_b <= it_a))
        out.append(("every run: monotone improvement", all(r.monotone for r in self.runs)))
        out.append(("every run: parameters within bounds", all(r.feasible for r in self.runs)))
        out.append(("every run completed", not self.failures))
        return [(d, bool(ok)) for d, ok in out]

    def metrics(self):
        """Everything except timing and machine fields; equal across reruns."""
        return {
            "table1": {a: {t: {"E": c["E"], "n": c["n"]} for t, c in row.items()}
                       for a, row in self.table1().items()},
            "table2": self.table2(),
            "per_joint": self.per_joint(),
            "lower_limb": self.lower_limb(),
            "runs": [{"algorithm": r.algorithm, "sequence": r.sequence, "mpjas": r.mpjas,
                      "iterations": r.iterations} for r in self.runs],
        }

    def to_dict(self):
        return {
            "algorithms": list(self.algorithms),
            "table1": self.table1(),
            "table2": self.table2(),
            "per_joint": self.per_joint(),
            "lower_limb": self.lower_limb(),
            "runs": [{"algorithm": r.algorithm, "sequence": r.sequence, "tier": r.tier,
                      "mode": r.mode, "frames": r.frames, "mpjas": r.mpjas,
                      "lower_limb": r.lower_limb, "seconds": r.seconds, "fps": r.fps,
                      "iterations": r.iterations, "converged": r.converged,
                      "monotone": r.monotone, "feasible": r.feasible,
                      "per_joint": r.per_joint} for r in self.runs],
            "failures": list(self.failures),
            "checks": [{"check": d, "passed": ok} for d, ok in self.checks()],
            "machine": self.machine,
        }

    def summary(self):
        """Human-readable tables."""
        lines = ["MPJAS (rad/joint) and optimisation fps by speed tier", ""]
        cols = self.tiers + ["average"]
        head = f"{'algorithm':<10}" + "".join(f"{c:>24}" for c in cols)
        lines += [head, f"{'':<10}" + "".join(f"{'fps':>12}{'E':>12}" for _ in cols)]
        for alg, row in self.table1().items():
            lines.append(f"{alg:<10}" + "".join(
                f"{row[c]['fps']:>12.3g}{row[c]['E']:>12.3e}" for c in cols))
        lines += ["", "MPJAS by limb mode", f"{'algorithm':<10}" + "".join(
            f"{m:>14}" for m in self.modes)]
        for alg, row in self.table2().items():
            lines.append(f"{alg:<10}" + "".join(f"{row[m]:>14.3e}" for m in self.modes))
        pj = self.per_joint()
        for mode in self.modes:
            lines += ["", f"per-joint MPJAS ({mode})", f"{'joint':<14}" + "".join(
                f"{a:>12}" for a in self.algorithms)]
            names = next((list(pj[a][mode]) for a in self.algorithms if mode in pj[a]), [])
            for n in names:
                lines.append(f"{n:<14}" + "".join(
                    f"{pj[a].get(mode, {}).get(n, float('nan')):>12.3e}" for a in self.algorithms))
        for f in self.failures:
            lines.append(f"failed: {f['algorithm']} on {f['sequence']}: {f['error']}")
        lines += ["", "checks"]
        for d, ok in self.checks():
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {d}")
        return "\n".join(lines) + "\n"


def machine_info():
    return {"platform": platform.platform(), "processor": platform.processor(),
            "python": platform.python_version(), "numpy": np.__version__,
            "cpus": os.cpu_count()}


def _record(label, gt, result, body):
    bounds = body.bounds()
    th = result.thetas
    calls = [result] + ([result.pre] if result.pre is not None else [])
    monotone = all(f <= f0 for r in calls for f0, f in zip(r.initial_losses, r.final_losses))
    feasible = bool(np.all(th >= bounds[:, 0]) and np.all(th <= bounds[:, 1]))
    return RunRecord(
        algorithm=label, sequence=gt.name, tier=gt.spec.tier, mode=gt.spec.mode,
        frames=len(th), mpjas=mpjas(th, gt.thetas, body),
        lower_limb=mpjas(th, gt.thetas, body, LOWER_LIMB),
        per_joint=mpjas_per_joint(th, gt.thetas, body), seconds=result.seconds,
        iterations=result.total_iterations, converged=result.all_converged,
        monotone=monotone, feasible=feasible)


def run_sequence(gt, algorithms, body, lambdas=None, settings=None, norm=None):
    """Run every requested algorithm on one ground-truth sequence."""
    lambdas = LAMBDA_BY_TIER if lambdas is None else lambdas
    settings = settings or OptimizerSettings()
    kw = {} if norm is None else {"norm": norm}
    records, failures = [], []
    warm = None
    for label in algorithms:
        driver, M = ALGORITHM_SPECS[label]
        try:
            if driver == "frame":
                res = ik_sequence_frame_by_frame(body, gt.poses, False, settings)
            elif driver == "frame-warm":
                res = warm = ik_sequence_frame_by_frame(body, gt.poses, True, settings)
            else:
                if warm is None:
                    warm = ik_sequence_frame_by_frame(body, gt.poses, True, settings)
                # the warm-started pass seeds the temporal driver; its time is
                # charged to every temporal run that reuses it
                res = ik_sequence_temporal(body, gt.poses, M, lambdas[gt.spec.tier], settings,
                                           pre=warm, **kw)
            records.append(_record(label, gt, res, body))
        except (PoseChainError, FloatingPointError) as exc:
            failures.append({"algorithm": label, "sequence": gt.name,
                             "error": f"{type(exc).__name__}: {exc}"})
    return records, failures


def _run_one(args):
    return run_sequence(*args)


def run_experiment(suite, algorithms=tuple(ALGORITHM_SPECS), lambdas=None, body=None,
                   settings=None, norm=None, workers=1, progress=None):
    """Run each algorithm on each sequence and collect an :class:`EvalReport`.

    Sequences are independent and may be spread over ``workers`` processes;
    metric values do not depend on the worker count.
    """
    body = body or default_body()
    for a in algorithms:
        if a not in ALGORITHM_SPECS:
            raise ValueError(f"unknown algorithm {a!r}; choose from {list(ALGORITHM_SPECS)}")
    jobs = [(gt, tuple(algorithms), body, lambdas, settings, norm) for gt in suite]
    runs, failures = [], []
    started = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_one, jobs)
            for recs, fails in results:
                runs.extend(recs)
                failures.extend(fails)
                if progress:
                    progress(recs)
    else:
        for job in jobs:
            recs, fails = _run_one(job)
            runs.extend(recs)
            failures.extend(fails)
            if progress:
                progress(recs)
    machine = machine_info()
    machine["wall_seconds"] = time.perf_counter() - started
    return EvalReport(runs=runs, algorithms=list(algorithms), machine=machine, failures=failures)
