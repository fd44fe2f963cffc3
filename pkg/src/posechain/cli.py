"""Command-line entry points: body, retarget, generate, evaluate, bench.

Exit codes: 0 success, 1 validation error, 2 non-convergence under
``--strict``, 3 I/O error.
"""
import argparse
import os
import sys

import numpy as np

from . import fileio
from .bodymodel import LOWER_LIMB, default_body
from .errors import PoseChainError
from .evaluation import ALGORITHM_SPECS, mpjas, mpjas_per_joint, run_experiment
from .losses import DEFAULT_NORM, TEMPORAL_NORMS
from .motiongen import MODES, SPEED_TIERS, MotionSpec, generate, generate_suite, suite_specs
from .solver import ALGORITHMS, LAMBDA_BY_TIER, OptimizerSettings, run_algorithm

EXIT_OK, EXIT_VALIDATION, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # bad arguments are validation failures, not argparse's default exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _load_body(path):
    return default_body() if path is None else fileio.read_body(path)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_body(args):
    body = default_body()
    _emit(fileio.dumps(fileio.body_to_doc(body)), args.out)
    return EXIT_OK


def cmd_retarget(args):
    body = _load_body(args.body)
    seq = fileio.read_poses(args.poses)
    seq.for_body(body)
    if args.lam is not None:
        lam = args.lam
    else:
        lam = LAMBDA_BY_TIER[args.speed] if args.speed else LAMBDA_BY_TIER["b"]
    if args.lam is not None and args.lam < 0:
        raise UsageError("--lambda must be non-negative")
    temporal = args.algorithm == "temporal"
    if temporal and not 2 <= args.M <= len(seq):
        raise UsageError(f"--M must be between 2 and the frame count {len(seq)}")
    settings = OptimizerSettings(max_iter=args.max_iter)
    res = run_algorithm(body, seq, args.algorithm, args.M, lam, settings, args.norm)
    prov = {
        "body_sha256": fileio.body_hash(body),
        "algorithm": args.algorithm,
        "lambda": lam if temporal else None,
        "M": args.M if temporal else None,
        "seed": args.seed,
        "norm": args.norm if temporal else None,
    }
    fileio.write_angles(args.out, fileio.AngleSequence(body.param_names, res.thetas, prov))
    print(f"wrote {len(res.thetas)} frames to {args.out} "
          f"(mean loss {np.mean(res.final_losses):.3e}, {res.total_iterations} iterations, "
          f"{res.seconds:.2f} s)")
    bad = [i for i, ok in enumerate(res.converged) if not ok]
    if bad:
        unit = "patches" if temporal else "frames"
        print(f"warning: optimizer did not converge on {len(bad)} {unit}: {bad}", file=sys.stderr)
        if args.strict:
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def _write_ground_truth(gt, body, out):
    stem = os.path.join(out, gt.name)
    fileio.write_poses(stem + ".poses.json", gt.poses)
    prov = {"body_sha256": fileio.body_hash(body), "algorithm": "ground-truth",
            "lambda": None, "M": None, "seed": gt.spec.seed,
            "speed": gt.spec.tier, "mode": gt.spec.mode}
    fileio.write_angles(stem + ".angles.json",
                        fileio.AngleSequence(body.param_names, gt.thetas, prov))


def cmd_generate(args):
    body = _load_body(args.body)
    if args.suite:
        specs = suite_specs(args.seed, args.frames, args.per_tier)
    else:
        specs = [MotionSpec(frames=args.frames, tier=args.speed, mode=args.mode, seed=args.seed)]
    os.makedirs(args.out, exist_ok=True)
    fileio.write_body(os.path.join(args.out, "body.json"), body)
    for spec in specs:
        _write_ground_truth(generate(spec, body), body, args.out)
    print(f"wrote {len(specs)} sequence pairs to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    body = _load_body(args.body)
    pred = fileio.read_angles(args.pred, body)
    gt = fileio.read_angles(args.gt, body)
    value = mpjas(pred.thetas, gt.thetas, body, relative=args.relative)
    payload = {
        "prediction": str(args.pred),
        "ground_truth": str(args.gt),
        "relative": args.relative,
        "frames": len(gt.thetas),
        "mpjas": value,
        "lower_limb": mpjas(pred.thetas, gt.thetas, body, LOWER_LIMB, args.relative),
        "per_joint": mpjas_per_joint(pred.thetas, gt.thetas, body, args.relative),
    }
    if args.out:
        fileio.write_report(args.out, payload)
    print(f"MPJAS {value:.6e} rad/joint over {len(gt.thetas)} frames")
    return EXIT_OK


def cmd_bench(args):
    body = _load_body(args.body)
    tiers = tuple(t for t in SPEED_TIERS if t in args.tiers)
    if not tiers or set(args.tiers) - set(SPEED_TIERS):
        raise UsageError(f"--tiers must be letters from {''.join(SPEED_TIERS)!r}")
    suite = generate_suite(args.seed, body, args.frames, args.per_tier, tiers)

    def progress(recs):
        for r in recs:
            print(f"  {r.sequence:<18} {r.algorithm:<4} MPJAS {r.mpjas:.3e}  {r.fps:7.2f} fps",
                  file=sys.stderr)

    report = run_experiment(suite, algorithms=args.algorithms, body=body,
                            settings=OptimizerSettings(max_iter=args.max_iter),
                            norm=args.norm, workers=args.workers, progress=progress)
    payload = {"seed": args.seed, "frames": args.frames, "per_tier": args.per_tier,
               "body_sha256": fileio.body_hash(body), **report.to_dict()}
    summary = report.summary()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        fileio.write_report(os.path.join(args.out, "report.json"), payload)
        _emit(summary, os.path.join(args.out, "summary.txt"))
    sys.stdout.write(summary)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="posechain", description="Retarget 3D keypoint sequences onto a joint chain.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("body", help="write the default body config")
    b.add_argument("--out", help="output path (default: stdout)")
    b.set_defaults(func=cmd_body)

    r = sub.add_parser("retarget", help="recover joint angles from a pose file")
    r.add_argument("poses", help="pose file")
    r.add_argument("--body", help="body config (default: built-in body)")
    r.add_argument("--algorithm", choices=ALGORITHMS, default="temporal")
    r.add_argument("--M", type=int, default=5, help="temporal patch length")
    r.add_argument("--lambda", dest="lam", type=float,
                   help="temporal weight (default: by --speed, else 0.5)")
    r.add_argument("--speed", choices=tuple(SPEED_TIERS), help="speed tier that picks lambda")
    r.add_argument("--norm", choices=TEMPORAL_NORMS, default=DEFAULT_NORM)
    r.add_argument("--seed", type=int, help="recorded in the provenance block")
    r.add_argument("--max-iter", type=int, default=OptimizerSettings.max_iter)
    r.add_argument("--strict", action="store_true", help="exit 2 if any optimization fails to converge")
    r.add_argument("--out", required=True, help="output angle file")
    r.set_defaults(func=cmd_retarget)

    g = sub.add_parser("generate", help="write synthetic ground-truth pose and angle files")
    g.add_argument("--suite", action="store_true", help="full bent/phased suite at every tier")
    g.add_argument("--per-tier", type=int, default=4, help="bent/phased pairs per tier with --suite")
    g.add_argument("--speed", choices=tuple(SPEED_TIERS), default="a")
    g.add_argument("--mode", choices=MODES, default="bent")
    g.add_argument("--frames", type=int, default=30)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--body", help="body config (default: built-in body)")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="MPJAS of predicted against ground-truth angles")
    e.add_argument("pred", help="predicted angle file")
    e.add_argument("gt", help="ground-truth angle file")
    e.add_argument("--body", help="body config (default: built-in body)")
    e.add_argument("--relative", choices=("global", "local"), default="global")
    e.add_argument("--out", help="report file")
    e.set_defaults(func=cmd_evaluate)

    k = sub.add_parser("bench", help="generate a suite, run every algorithm and report")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--per-tier", type=int, default=4)
    k.add_argument("--frames", type=int, default=30)
    k.add_argument("--tiers", default="".join(SPEED_TIERS), help="subset of tiers, e.g. 'ac'")
    k.add_argument("--algorithms", nargs="+", choices=tuple(ALGORITHM_SPECS),
                   default=list(ALGORITHM_SPECS))
    k.add_argument("--norm", choices=TEMPORAL_NORMS, default=DEFAULT_NORM)
    k.add_argument("--max-iter", type=int, default=OptimizerSettings.max_iter)
    k.add_argument("--workers", type=int, default=1)
    k.add_argument("--body", help="body config (default: built-in body)")
    k.add_argument("--out", help="output directory for report.json and summary.txt")
    k.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PoseChainError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
