"""Bounded local minimisation and the sequence IK drivers.

Three drivers share one minimiser:

* frame-by-frame IK from the rest pose (``frame``),
* frame-by-frame IK warm-started from the previous frame (``frame-warm``),
* temporal IK over patches of ``M`` frames, initialised by ``frame-warm`` and
  stitched to the preceding patch (``temporal``).

Gradients are forward finite differences. The objectives here know their own
structure, so a whole gradient is evaluated as one batched forward-kinematics
call instead of ``P`` scalar calls.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NonFiniteObjective, SequenceTooShort
from .losses import DEFAULT_NORM, PoseSequence, frame_loss_batch, frame_targets, temporal_error

# temporal weight by motion speed tier (slow a, medium b, fast c)
LAMBDA_BY_TIER = {"a": 0.7, "b": 0.5, "c": 0.3}

ALGORITHMS = ("frame", "frame-warm", "temporal")


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 200
    ftol: float = 1e-8
    method: str = "SLSQP"
    fd_step: float = 1e-6
    fd_scheme: str = "forward"

    def __post_init__(self):
        if self.max_iter <= 0 or self.ftol <= 0 or self.fd_step <= 0:
            raise ValueError("optimizer settings must be positive")
        if self.method not in ("SLSQP", "L-BFGS-B"):
            raise ValueError(f"unsupported method {self.method!r}")
        if self.fd_scheme not in ("forward", "central"):
            raise ValueError(f"unsupported finite-difference scheme {self.fd_scheme!r}")


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    converged: bool
    fun0: float
    message: str = ""


def _fd_steps(x, bounds, h):
    """Per-coordinate forward steps, flipped to backward where ``x + h`` leaves the box."""
    steps = np.full_like(x, h)
    if bounds is not None:
        steps[x + h > bounds[:, 1]] = -h
    return steps


def fd_gradient(fun, x, bounds=None, step=1e-6, scheme="forward", f0=None):
    """Finite-difference gradient of a scalar function, one call per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    if scheme == "central":
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (fun(x + e) - fun(x - e)) / (2 * step)
        return g
    f0 = fun(x) if f0 is None else f0
    steps = _fd_steps(x, bounds, step)
    for i in range(len(x)):
        xi = x.copy()
        xi[i] += steps[i]
        g[i] = (fun(xi) - f0) / steps[i]
    return g


def minimize(objective, x0, bounds, settings=None, jac=None):
    """Minimise ``objective`` over the box ``bounds`` (shape ``(n, 2)``).

    ``x0`` is projected into the box first. The returned point is inside the
    box and never worse than the start; non-convergence is reported through
    ``converged`` rather than raised.
    """
    settings = settings or OptimizerSettings()
    bounds = np.asarray(bounds, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), bounds[:, 0], bounds[:, 1])
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise NonFiniteObjective(f"objective is {f0} at the initial point")

    cache = {}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = float(objective(x))
        return cache[key]

    if jac is None:
        def jac(x):
            return fd_gradient(fun, x, bounds, settings.fd_step, settings.fd_scheme,
                               f0=fun(x) if settings.fd_scheme == "forward" else None)

    if settings.method == "SLSQP":
        options = {"maxiter": settings.max_iter, "ftol": settings.ftol}
    else:
        options = {"maxiter": settings.max_iter, "ftol": settings.ftol, "gtol": 1e-10}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun, x0, jac=jac, bounds=bounds, method=settings.method,
                                options=options)
    x = np.clip(res.x, bounds[:, 0], bounds[:, 1])
    f = fun(x)
    if not np.isfinite(f):
        raise NonFiniteObjective("objective became non-finite during minimisation")
    if f > f0:
        x, f = x0, f0
    return MinimizeResult(x=x, fun=f, nit=int(res.nit), converged=bool(res.success),
                          fun0=f0, message=str(res.message))


class FrameObjective:
    """Frame loss of one keypoint frame, with a batched finite-difference gradient."""

    def __init__(self, body, keypoints, fd_step=1e-6):
        self.body = body
        self.bounds = body.bounds()
        self.local_t, self.global_t = frame_targets(body, keypoints)
        self.h = fd_step

    def __call__(self, x):
        return float(frame_loss_batch(self.body, x, self.local_t, self.global_t))

    def gradient(self, x):
        steps = _fd_steps(x, self.bounds, self.h)
        X = np.vstack([x, x + np.diag(steps)])
        f = frame_loss_batch(self.body, X, self.local_t, self.global_t)
        return (f[1:] - f[0]) / steps


class PatchObjective:
    """Mean frame loss over a patch plus the weighted temporal term.

    Variables are the patch's parameter vectors flattened frame-major. A
    perturbation of frame ``m`` only changes frame ``m``'s pose loss, so the
    forward-difference gradient needs one batched frame-loss evaluation per
    frame plus a cheap batched temporal evaluation.
    """

    def __init__(self, body, keypoints, lam, stitch=None, norm=DEFAULT_NORM, fd_step=1e-6):
        self.body = body
        self.M = len(keypoints)
        self.P = body.n_params
        self.lam = float(lam)
        self.stitch = None if stitch is None else np.asarray(stitch, float)
        self.norm = norm
        self.local_t, self.global_t = frame_targets(body, keypoints)
        self.h = fd_step
        self.bounds = np.tile(body.bounds(), (self.M, 1))

    def _temporal(self, X):
        return temporal_error(X, self.body, self.norm, self.stitch)

    def __call__(self, x):
        X = x.reshape(self.M, self.P)
        pose = frame_loss_batch(self.body, X, self.local_t, self.global_t).mean()
        return float(pose + self.lam * self._temporal(X))

    def gradient(self, x):
        M, P = self.M, self.P
        X = x.reshape(M, P)
        steps = _fd_steps(x, self.bounds, self.h).reshape(M, P)
        # (M, 1 + P, P): base vector then one perturbation per parameter, per frame
        batch = np.repeat(X[:, None, :], P + 1, axis=1)
        idx = np.arange(P)
        batch[:, 1 + idx, idx] += steps
        f = frame_loss_batch(self.body, batch, self.local_t[:, None], self.global_t[:, None])
        g_pose = (f[:, 1:] - f[:, :1]) / (M * steps)
        if self.lam == 0.0:
            return g_pose.ravel()
        seqs = np.repeat(X[None], M * P, axis=0)
        flat = np.arange(M * P)
        seqs.reshape(M * P, M * P)[flat, flat] += steps.ravel()
        t = self._temporal(seqs)
        t0 = self._temporal(X)
        g_temp = self.lam * (t - t0) / steps.ravel()
        return g_pose.ravel() + g_temp


@dataclass
class IKResult:
    """Solution of one IK run. Per-solve lists have one entry per frame for the
    frame-by-frame drivers and one per patch for the temporal driver."""
    algorithm: str
    thetas: np.ndarray
    frame_losses: np.ndarray
    iterations: list
    converged: list
    initial_losses: list
    final_losses: list
    seconds: float
    pre: "IKResult | None" = None
    patches: list = field(default_factory=list)

    @property
    def total_iterations(self):
        n = int(sum(self.iterations))
        return n + (self.pre.total_iterations if self.pre is not None else 0)

    @property
    def all_converged(self):
        ok = all(self.converged)
        return ok and (self.pre.all_converged if self.pre is not None else True)


def _keypoints(body, seq):
    if isinstance(seq, PoseSequence):
        return seq.for_body(body)
    kp = np.asarray(seq, dtype=float)
    return kp[None] if kp.ndim == 2 else kp


def ik_frame(body, frame, theta0=None, settings=None):
    """Fit one keypoint frame by minimising the frame loss from ``theta0``."""
    settings = settings or OptimizerSettings()
    t0 = time.perf_counter()
    kp = _keypoints(body, frame)[0]
    theta0 = body.rest_params() if theta0 is None else np.asarray(theta0, float)
    obj = FrameObjective(body, kp, settings.fd_step)
    res = minimize(obj, theta0, obj.bounds, settings, jac=obj.gradient)
    return IKResult("frame", res.x[None], np.array([res.fun]), [res.nit], [res.converged],
                    [res.fun0], [res.fun], time.perf_counter() - t0)


def ik_sequence_frame_by_frame(body, seq, warm_start=False, settings=None):
    """Fit every frame independently, optionally starting each from the last solution."""
    settings = settings or OptimizerSettings()
    t0 = time.perf_counter()
    kp = _keypoints(body, seq)
    if len(kp) < 1:
        raise SequenceTooShort("empty pose sequence")
    rest = body.rest_params()
    thetas = np.empty((len(kp), body.n_params))
    iters, conv, f0s, fs = [], [], [], []
    start = rest
    for m, frame in enumerate(kp):
        obj = FrameObjective(body, frame, settings.fd_step)
        res = minimize(obj, start if warm_start else rest, obj.bounds, settings, jac=obj.gradient)
        thetas[m] = res.x
        iters.append(res.nit)
        conv.append(res.converged)
        f0s.append(res.fun0)
        fs.append(res.fun)
        start = res.x
    return IKResult("frame-warm" if warm_start else "frame", thetas, np.asarray(fs),
                    iters, conv, f0s, fs, time.perf_counter() - t0)


def patch_ranges(F, M):
    """Consecutive ``[start, stop)`` patches of length ``M``; a trailing single
    frame joins the previous patch."""
    if F < 2:
        raise SequenceTooShort(f"temporal IK needs at least 2 frames, got {F}")
    if M < 2:
        raise SequenceTooShort(f"patch length must be at least 2, got {M}")
    ranges = [[s, min(s + M, F)] for s in range(0, F, M)]
    if len(ranges) > 1 and ranges[-1][1] - ranges[-1][0] == 1:
        last = ranges.pop()
        ranges[-1][1] = last[1]
    return [tuple(r) for r in ranges]


def ik_sequence_temporal(body, seq, M=5, lam=0.5, settings=None, norm=DEFAULT_NORM, pre=None):
    """Patch-wise temporal IK seeded by warm-started frame-by-frame IK.

    Patches are solved forward in time; each one after the first is tied to
    the final frame of its predecessor's solution. ``pre`` may carry an
    already-computed warm-started result to reuse as the seed.
    """
    settings = settings or OptimizerSettings()
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    kp = _keypoints(body, seq)
    ranges = patch_ranges(len(kp), M)
    t0 = time.perf_counter()
    if pre is None:
        pre = ik_sequence_frame_by_frame(body, kp, warm_start=True, settings=settings)
    thetas = pre.thetas.copy()
    iters, conv, f0s, fs = [], [], [], []
    stitch = None
    for start, stop in ranges:
        obj = PatchObjective(body, kp[start:stop], lam, stitch, norm, settings.fd_step)
        res = minimize(obj, thetas[start:stop].ravel(), obj.bounds, settings, jac=obj.gradient)
        thetas[start:stop] = res.x.reshape(stop - start, body.n_params)
        stitch = thetas[stop - 1].copy()
        iters.append(res.nit)
        conv.append(res.converged)
        f0s.append(res.fun0)
        fs.append(res.fun)
    local_t, global_t = frame_targets(body, kp)
    losses = frame_loss_batch(body, thetas, local_t, global_t)
    seconds = time.perf_counter() - t0 + pre.seconds
    return IKResult("temporal", thetas, losses, iters, conv, f0s, fs, seconds, pre=pre,
                    patches=ranges)


def run_algorithm(body, seq, algorithm, M=5, lam=0.5, settings=None, norm=DEFAULT_NORM):
    if algorithm == "frame":
        return ik_sequence_frame_by_frame(body, seq, False, settings)
    if algorithm == "frame-warm":
        return ik_sequence_frame_by_frame(body, seq, True, settings)
    if algorithm == "temporal":
        return ik_sequence_temporal(body, seq, M, lam, settings, norm)
    raise ValueError(f"unknown algorithm {algorithm!r}; use one of {ALGORITHMS}")
