"""Synthetic ground-truth motion inside the joint ranges.

Every parameter follows a bounded random walk: per-frame increments are
uniform in ``[-cap, cap]`` and reflected back off the range limits, so both
range and speed limits hold by construction. Knee and elbow flexion run on
their own random stream, which makes the bent-only and the phased variant of
one seed identical everywhere else. Bent-only limbs never straighten past
``MIN_BENT``. In phased mode the limbs are fully straight during the extended
phases; during bent phases they follow the bent-only trajectory clipped by a
ramp that rises and falls at the speed cap, so flexion is strictly positive
inside a bent phase yet never changes faster than any other parameter.
"""
from dataclasses import dataclass

import numpy as np

from .bodymodel import LIMB_FLEXION
from .errors import InfeasibleSchedule
from .losses import PoseSequence

SPEED_TIERS = {"a": np.pi / 500, "b": np.pi / 200, "c": np.pi / 70}
MODES = ("bent", "phased")
# extended, bent, extended, bent, extended
PHASE_SCHEDULE = (3, 9, 6, 9, 3)
MIN_BENT = 0.3
# the root axis is kept at least this long so its direction never jumps
_MIN_AXIS_NORM = 0.5


@dataclass(frozen=True)
class MotionSpec:
    frames: int = 30
    tier: str = "a"
    mode: str = "bent"
    seed: int = 0
    schedule: tuple = PHASE_SCHEDULE

    def __post_init__(self):
        if self.tier not in SPEED_TIERS:
            raise ValueError(f"unknown speed tier {self.tier!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.frames < 1:
            raise ValueError("need at least one frame")

    @property
    def cap(self):
        return SPEED_TIERS[self.tier]


@dataclass(frozen=True)
class GroundTruthSequence:
    spec: MotionSpec
    thetas: np.ndarray
    poses: PoseSequence
    extended: np.ndarray

    @property
    def name(self):
        return f"{self.spec.tier}-{self.spec.mode}-{self.spec.seed}"


def extended_mask(spec):
    """Boolean per frame: limbs straight?  All False in bent mode."""
    if spec.mode == "bent":
        return np.zeros(spec.frames, dtype=bool)
    if any(n <= 0 for n in spec.schedule):
        raise InfeasibleSchedule(f"phase lengths must be positive: {spec.schedule}")
    if sum(spec.schedule) != spec.frames:
        raise InfeasibleSchedule(
            f"phase schedule {spec.schedule} covers {sum(spec.schedule)} frames, "
            f"sequence has {spec.frames}")
    mask = np.concatenate([np.full(n, k % 2 == 0) for k, n in enumerate(spec.schedule)])
    return mask


def ramp_frames(mask):
    """Frames to the nearest extended frame (inf when there is none)."""
    frames = np.arange(len(mask))
    ext = frames[mask]
    if len(ext) == 0:
        return np.full(len(mask), np.inf)
    return np.abs(frames[:, None] - ext[None, :]).min(axis=1).astype(float)


def _reflect(x, lo, hi):
    x = np.where(x > hi, 2 * hi - x, x)
    return np.where(x < lo, 2 * lo - x, x)


def _walk(rng, start, lo, hi, cap, frames):
    out = np.empty((frames, len(start)))
    out[0] = start
    for m in range(1, frames):
        step = rng.uniform(-cap, cap, size=len(start))
        out[m] = _reflect(out[m - 1] + step, lo, hi)
    return out


def _root_walk(rng, bounds, cap, frames):
    t = rng.uniform(0.0, 0.3)
    a = rng.uniform(-np.pi, np.pi)
    x = np.array([np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t),
                  rng.uniform(-np.pi / 2, np.pi / 2)])
    lo, hi = bounds[:, 0], bounds[:, 1]
    out = np.empty((frames, 4))
    out[0] = x
    for m in range(1, frames):
        step = rng.uniform(-cap, cap, size=4)
        nxt = _reflect(out[m - 1] + step, lo, hi)
        if np.linalg.norm(nxt[:3]) < _MIN_AXIS_NORM:
            step[:3] = -step[:3]
            nxt = _reflect(out[m - 1] + step, lo, hi)
        out[m] = nxt
    return out


def generate(spec, body):
    """Ground-truth parameters and keypoints for one motion specification."""
    mask = extended_mask(spec)
    seq = np.random.SeedSequence(spec.seed)
    body_rng, limb_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    bounds = body.bounds()
    P = body.n_params
    limb_idx = np.array([body.param_index(j, "X") for j in LIMB_FLEXION])
    other = np.setdiff1d(np.arange(4, P), limb_idx)

    thetas = np.empty((spec.frames, P))
    thetas[:, :4] = _root_walk(body_rng, bounds[:4], spec.cap, spec.frames)
    lo, hi = bounds[other, 0], bounds[other, 1]
    width = hi - lo
    start = body_rng.uniform(lo + width / 4, hi - width / 4)
    thetas[:, other] = _walk(body_rng, start, lo, hi, spec.cap, spec.frames)

    lo = np.maximum(bounds[limb_idx, 0], MIN_BENT)
    hi = bounds[limb_idx, 1]
    if np.any(hi <= lo):
        raise InfeasibleSchedule("limb flexion range does not reach the bent minimum")
    width = hi - lo
    start = limb_rng.uniform(lo + width / 4, hi - width / 4)
    limbs = _walk(limb_rng, start, lo, hi, spec.cap, spec.frames)
    thetas[:, limb_idx] = np.minimum(limbs, (spec.cap * ramp_frames(mask))[:, None])

    poses = PoseSequence(body.keypoints, body.keypoint_positions(thetas))
    return GroundTruthSequence(spec, thetas, poses, mask)


def suite_specs(seed=0, frames=30, per_tier=4, tiers=tuple(SPEED_TIERS)):
    """Paired bent/phased specifications, ``per_tier`` pairs per speed tier."""
    specs = []
    for t, tier in enumerate(SPEED_TIERS):
        if tier not in tiers:
            continue
        for k in range(per_tier):
            s = int(np.random.SeedSequence([seed, t, k]).generate_state(1)[0])
            for mode in MODES:
                specs.append(MotionSpec(frames=frames, tier=tier, mode=mode, seed=s))
    return specs


def generate_suite(seed=0, body=None, frames=30, per_tier=4, tiers=tuple(SPEED_TIERS)):
    """The evaluation suite: bent-only and phased twins at three speeds."""
    if body is None:
        from .bodymodel import default_body
        body = default_body()
    return [generate(s, body) for s in suite_specs(seed, frames, per_tier, tiers)]


def speed_violations(gt, body):
    """``(frame, param)`` pairs whose change exceeds the tier cap."""
    d = np.abs(np.diff(gt.thetas, axis=0))
    return [tuple(int(i) for i in ix) for ix in np.argwhere(d > gt.spec.cap + 1e-12)]
