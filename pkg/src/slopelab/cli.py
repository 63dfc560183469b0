"""``slope-lab`` command line.

Every subcommand accepts ``--config``, ``--seed``, ``--out``, ``--jobs``,
``--tol-scale`` and ``--no-timestamp``.  Exit codes: 0 success, 1 a
certificate or property check failed, 2 invalid config or arguments,
3 a numerical or generation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .bounds import kn_order_bound, kn_ratio, reconstruct_value_gap
from .convex_core import argmin, evaluate
from .experiments import (
    ConfigError,
    ExperimentConfig,
    GenerationError,
    expand,
    instance_from_config,
    load_config,
    parse_config,
    run_sweep,
    write_csv,
    write_json,
    generate,
)
from .flow import FlowError, check_properties, integrate, trajectory_jsonl
from .minnorm_qp import SolverError
from .stability import VerifyOptions, verify_instance

_DEFAULT_SWEEP = {
    "sweeps": [
        {"n": [1, 2, 3], "family": ["max-affine", "mixed"], "m": 4,
         "perturbation": "scale", "epsilon": [0.001, 0.01, 0.1], "count": 5}
    ]
}
_DEFAULT_SINGLE = {"instance": {"n": 2, "family": "mixed", "m": 4, "perturbation": "affine", "epsilon": 0.01}}
_DEFAULT_KN = {"kn": {"n": [1, 2, 3], "family": "mixed", "m": 4, "count": 20}}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (built-in default if omitted)")
    common.add_argument("--seed", type=_u64, default=0, help="run seed (u64)")
    common.add_argument("--out", default="slope_lab_out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--tol-scale", type=_positive, default=1.0, help="multiplier on certificate slacks")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamp lines from outputs")

    p = argparse.ArgumentParser(prog="slope-lab", description="Slope-based determination experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("flow", parents=[common], help="dump one subgradient-flow trajectory")
    sub.add_parser("verify", parents=[common], help="certify the stability bound on one instance")
    sub.add_parser("sweep", parents=[common], help="run a family study")
    sub.add_parser("reconstruct", parents=[common], help="recover f(x0) - min f from slopes")
    kn = sub.add_parser("knstudy", parents=[common], help="length / distance ratios of flows")
    kn.add_argument("--n", type=int, action="append", help="dimension (repeatable; overrides the config)")
    return p


def _config(args, default: dict) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config(default)
    tol = cfg.tolerances.with_overrides(slack_scale=cfg.tolerances.slack_scale * args.tol_scale)
    return dataclasses.replace(cfg, tolerances=tol)


def _cmd_flow(args) -> int:
    cfg = _config(args, _DEFAULT_SINGLE)
    inst = instance_from_config(cfg, args.seed, cfg.tolerances)
    traj = integrate(inst.f, inst.x, cfg.flow, tol=cfg.tolerances)
    rep = check_properties(traj)
    with open(os.path.join(args.out, "trajectory.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(trajectory_jsonl(traj))
    ok = rep.ok()
    print(f"termination: {traj.termination}")
    print(f"points: {len(traj)}  time: {float(traj.times[-1])!r}  length: {traj.total_length!r}")
    print(f"final gap: {float(traj.values[-1] - traj.min_value)!r}  "
          f"final distance: {float(traj.dist_to_argmin[-1])!r}")
    print(f"properties: {'ok' if ok else 'VIOLATED'}")
    return 0 if ok else 1


def _cmd_verify(args) -> int:
    cfg = _config(args, _DEFAULT_SINGLE)
    inst = instance_from_config(cfg, args.seed, cfg.tolerances)
    opts = VerifyOptions(flow=cfg.flow, tube_samples=cfg.tube_samples, seed=args.seed & (2**32 - 1),
                         tol=cfg.tolerances)
    rep = verify_instance(inst.f, inst.g, inst.x, inst.r, opts, instance_id=0)
    doc = rep.to_dict()
    equality = abs(rep.margin) <= 1e-9 * rep.scale
    doc["equality_case"] = equality
    write_json(os.path.join(args.out, "verify_report.json"), doc, not args.no_timestamp)
    for key in ("dist_x", "gap_x", "slope_dev_traj", "slope_dev_tube", "value_dev_argmin",
                "delta_star", "lhs", "rhs_main", "rhs_cv1", "margin", "proof_case"):
        print(f"{key}: {doc[key]!r}")
    if equality:
        print("equality case: lhs equals rhs_main")
    print(f"certificate: {'PASSED' if rep.passed else 'FAILED'}")
    return 0 if rep.passed else 1


def _cmd_sweep(args) -> int:
    cfg = _config(args, _DEFAULT_SWEEP)
    if not cfg.sweeps:
        raise ConfigError("sweeps", "at least one sweep is required")
    code, summary = run_sweep(cfg, args.seed, args.out, jobs=args.jobs, timestamp=not args.no_timestamp)
    print(f"instances: {summary['completed']}/{summary['instances']}")
    print(f"certificate failures: {summary['certificate_failures']}  lemma1 failures: "
          f"{summary['lemma1_failures']}  cv1 failures: {summary['cv1_failures']}")
    print(f"min margin: {summary['min_margin']!r}  equality cases: {summary['equality_cases']}")
    for n, K in summary["empirical_K"].items():
        print(f"n={n}: empirical K {K!r} (order bound {summary['kn_order_bound'][n]!r})")
    for err in summary["errors"]:
        print(f"instance {err['instance_id']}: {err['error']}", file=sys.stderr)
    return code


def _cmd_reconstruct(args) -> int:
    cfg = _config(args, _DEFAULT_SINGLE)
    inst = instance_from_config(cfg, args.seed, cfg.tolerances)
    traj = integrate(inst.f, inst.x, cfg.flow, tol=cfg.tolerances)
    rec = reconstruct_value_gap(inst.f, traj)
    true_gap = float(evaluate(inst.f, inst.x) - argmin(inst.f, tol=cfg.tolerances).min_value)
    rel = abs(rec.gap - true_gap) / max(abs(true_gap), 1e-300)
    doc = {"gap": rec.gap, "true_gap": true_gap, "relative_error": rel, "partial": rec.partial,
           "remaining_bound": rec.remaining_bound, "termination": traj.termination, "points": len(traj)}
    write_json(os.path.join(args.out, "reconstruct.json"), doc, not args.no_timestamp)
    print(f"gap: {rec.gap!r}")
    print(f"true gap: {true_gap!r}  relative error: {rel!r}")
    return 0


def _cmd_knstudy(args) -> int:
    cfg = _config(args, _DEFAULT_KN)
    spec = dict(cfg.kn if cfg.kn is not None else _DEFAULT_KN["kn"])
    if args.n:
        spec["n"] = args.n
    kcfg = parse_config({"sweeps": [spec], "radius_multiple": cfg.radius_multiple})
    rows, ratios = [], {}
    for iid, s in enumerate(expand(kcfg, args.seed)):
        inst = generate(s, tol=cfg.tolerances)
        traj = integrate(inst.f, inst.x, cfg.flow, tol=cfg.tolerances)
        k = kn_ratio(traj)
        ratios.setdefault(s.n, []).append(k)
        rows.append({"instance_id": iid, "n": s.n, "dist_x0": traj.dist_to_argmin[0],
                     "length": traj.total_length, "kn_ratio": k, "termination": traj.termination})
    write_csv(os.path.join(args.out, "kn_ratios.csv"),
              ("instance_id", "n", "dist_x0", "length", "kn_ratio", "termination"), rows, not args.no_timestamp)
    summary, ok = {}, True
    for n in sorted(ratios):
        r = np.array(ratios[n])
        within = bool(r.max() <= kn_order_bound(n) + 1e-6)
        ok = ok and within
        summary[str(n)] = {"count": int(r.size), "max_ratio": float(r.max()), "mean_ratio": float(r.mean()),
                           "order_bound": kn_order_bound(n), "within_bound": within}
        print(f"n={n}: max ratio {float(r.max())!r}  mean {float(r.mean())!r}  bound {kn_order_bound(n)!r}")
    write_json(os.path.join(args.out, "kn_summary.json"), summary, not args.no_timestamp)
    return 0 if ok else 1


_COMMANDS = {
    "flow": _cmd_flow,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "reconstruct": _cmd_reconstruct,
    "knstudy": _cmd_knstudy,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GenerationError, SolverError, FlowError, ValueError) as exc:
        print(f"error ({args.command}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
