"""Command-line interface.

Subcommands: ``run`` (execute a flow experiment), ``audit`` (re-run series
audits on a stored run), ``invariants`` (one-shot record for a body file),
``polar`` (write the polar body), ``normalize`` (write the SL-normalized
body and its frame).  Exit codes: 0 all audits pass, 2 audit failure,
1 execution error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .affine import normalize_special_linear
from .flow import FlowParams, FlowState
from .invariants import make_record
from .runner import RunConfig, SeedSpec, audit_records, run
from .snapshots import load_body, read_series, save_body, write_json


def _default_outdir():
    return os.environ.get("CENTROFLOW_OUTDIR", "runs")


def _parse_resolution(text: str, n: int):
    parts = [int(v) for v in text.split("x")]
    if n == 1:
        if len(parts) != 1:
            raise argparse.ArgumentTypeError("circle resolution is a single count")
        return parts[0]
    if len(parts) == 1:
        return (parts[0], 2 * parts[0])
    if len(parts) == 2:
        return tuple(parts)
    raise argparse.ArgumentTypeError("sphere resolution is NLATxNLON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="centroflow",
        description="Centro-affine normal flow experiments on convex bodies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a flow experiment")
    run_p.add_argument("--n", type=int, default=2, choices=(1, 2))
    run_p.add_argument("--p", type=float, default=3.0)
    run_p.add_argument("--resolution", default="32x64",
                       help="circle node count or NLATxNLON")
    run_p.add_argument("--seed-body", default="ball:1.0",
                       help="e.g. ball:1.0 | ellipsoid:1,1.2,0.9 | "
                            "perturbed-ball:0.05,4,2 | capped-ball:0.2,0.25 | "
                            "random-perturbed-ball:0.05,6 | from-file:PATH")
    run_p.add_argument("--direction", default="contracting",
                       choices=("contracting", "dual"))
    run_p.add_argument("--horizon-fraction", type=float, default=0.95)
    run_p.add_argument("--t-end", type=float, default=None)
    run_p.add_argument("--max-steps", type=int, default=100000)
    run_p.add_argument("--dt-safety", type=float, default=0.8)
    run_p.add_argument("--dt-max", type=float, default=None)
    run_p.add_argument("--record-every", type=int, default=25)
    run_p.add_argument("--snapshot-every", type=int, default=0)
    run_p.add_argument("--normalize-every", type=int, default=1)
    run_p.add_argument("--epsilon", type=float, default=None,
                       help="Mahler pinching parameter for the conditional audit")
    run_p.add_argument("--gamma", type=float, default=1.0,
                       help="stability constant (conditional audits)")
    run_p.add_argument("--rng-seed", type=int, default=0)
    run_p.add_argument("--outdir", default=None)

    audit_p = sub.add_parser("audit", help="re-run audits on a stored series")
    audit_p.add_argument("rundir", help="run directory containing series.csv")

    inv_p = sub.add_parser("invariants", help="one-shot record for a body file")
    inv_p.add_argument("body", help="body snapshot path")
    inv_p.add_argument("--p", type=float, default=3.0)

    polar_p = sub.add_parser("polar", help="write the polar body")
    polar_p.add_argument("body")
    polar_p.add_argument("output")

    norm_p = sub.add_parser("normalize", help="write the SL-normalized body")
    norm_p.add_argument("body")
    norm_p.add_argument("output")
    norm_p.add_argument("--frame-output", default=None,
                        help="optional JSON path for the frame matrix")

    return parser


def _cmd_run(args) -> int:
    outdir = args.outdir or os.path.join(_default_outdir(), "run")
    config = RunConfig(
        n=args.n,
        p=args.p,
        resolution=_parse_resolution(args.resolution, args.n),
        seed=SeedSpec.parse(args.seed_body),
        direction=args.direction,
        horizon_fraction=args.horizon_fraction,
        t_end=args.t_end,
        max_steps=args.max_steps,
        dt_safety=args.dt_safety,
        dt_max=args.dt_max,
        record_every=args.record_every,
        snapshot_every=args.snapshot_every,
        normalize_every=args.normalize_every,
        epsilon=args.epsilon,
        gamma=args.gamma,
        outdir=outdir,
        rng_seed=args.rng_seed,
    )
    result = run(config)
    status = "FAILED" if result.failure else (
        "all audits pass" if result.audits.get("all_pass") else "audit failure"
    )
    print(f"run finished: {len(result.records)} records, halt={result.halt_reason}, "
          f"{status}; artifacts in {outdir}")
    if result.failure:
        print(f"failure: {result.failure}", file=sys.stderr)
    return result.exit_code


def _cmd_audit(args) -> int:
    series_path = os.path.join(args.rundir, "series.csv")
    meta_path = os.path.join(args.rundir, "metadata.json")
    records = read_series(series_path)
    n, p = 2, 3.0
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        n = meta["config"]["n"]
        p = meta["config"]["p"]
    audits = audit_records(records, n, p)
    print(json.dumps(audits, indent=2, sort_keys=True))
    return 0 if audits["all_pass"] else 2


def _cmd_invariants(args) -> int:
    body = load_body(args.body)
    params = FlowParams(p=args.p, n=body.n)
    with open(args.body) as fh:
        doc = json.load(fh)
    t = float(doc.get("time", 0.0))
    state = FlowState(body=body, t=t, params=params)
    rec = make_record(state)
    print(json.dumps(dict(zip(rec.field_names(), rec.as_row())), indent=2))
    return 0


def _cmd_polar(args) -> int:
    body = load_body(args.body)
    save_body(body.polar(), args.output)
    print(f"polar body written to {args.output}")
    return 0


def _cmd_normalize(args) -> int:
    body = load_body(args.body)
    frame, normalized = normalize_special_linear(body)
    save_body(normalized, args.output)
    if args.frame_output:
        write_json(
            {
                "matrix": [list(row) for row in frame.matrix],
                "quadratic_form": [list(row) for row in frame.quadratic_form],
                "achieved_ratio": frame.achieved_ratio,
                "banach_mazur_upper": math.log(frame.achieved_ratio),
            },
            args.frame_output,
        )
    print(f"normalized body written to {args.output} "
          f"(ratio {frame.achieved_ratio:.6g})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "audit": _cmd_audit,
        "invariants": _cmd_invariants,
        "polar": _cmd_polar,
        "normalize": _cmd_normalize,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
