"""Command line interface: ``ri2d <subcommand> [options]``.

Exit codes: 0 on success, 1 when a verification fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .estimators import report_json
from .interlacements import InterlacementConfig, sample_soup, vacant_grids
from .kernel import DEFAULT_EXACT_RADIUS, build_kernel
from .lattice import parse_point, parse_points
from .potential import DegenerateSetError, LatticeSet, analyze
from .rng import RngSeed
from .torus import InsufficientSamplesError, conditional_uncovered_estimate
from .walks import hat_run_until_escape, srw_path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _point(text: str):
    try:
        return parse_point(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _points(text: str):
    try:
        return parse_points(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _seed(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None,
                        help="64-bit seed (default: $RI2D_SEED or 0x5EED)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--exact-radius", type=int, default=DEFAULT_EXACT_RADIUS,
                        help="half-width of the exact kernel table")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ri2d", description="Two-dimensional random interlacements toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", parents=[common], help="potential kernel a(x) as CSV")
    k.add_argument("--point", type=_point, action="append", required=True, help="x,y (repeatable)")

    c = sub.add_parser("cap", parents=[common], help="capacity and harmonic measure as JSON")
    c.add_argument("--points", type=_points, required=True, help="x1,y1;x2,y2;...")

    w = sub.add_parser("walk", parents=[common], help="sample a SRW or S-hat path")
    w.add_argument("--mode", choices=("srw", "hat"), default="hat")
    w.add_argument("--start", type=_point, required=True)
    w.add_argument("--steps", type=int, default=1000, help="number of SRW steps")
    w.add_argument("--window-radius", type=float, default=10.0)
    w.add_argument("--kill-radius", type=float, default=None, help="default 64 x window radius, capped by the table")
    w.add_argument("--format", choices=("csv", "json"), default="json")

    s = sub.add_parser("sample-vacant", parents=[common], help="vacant sets of one soup on B(R)")
    s.add_argument("--radius", type=int, default=40)
    s.add_argument("--levels", type=_floats, default=[0.5, 1.0, 1.25, 1.5])
    s.add_argument("--out", choices=("pgm", "csv", "json"), default="pgm")
    s.add_argument("--output-dir", type=Path, default=Path("."))
    s.add_argument("--prefix", default="vacant")

    t = sub.add_parser("torus", parents=[common], help="conditional uncovered-set estimate on the torus")
    t.add_argument("--n", type=int, default=64)
    t.add_argument("--alpha", type=float, default=0.25)
    t.add_argument("--set", dest="points", type=_points, default=parse_points("0,0;1,0"))
    t.add_argument("--replicas", type=int, default=2000)

    v = sub.add_parser("verify", parents=[common], help="run acceptance checks")
    v.add_argument("--suite", choices=("exact", "mc", "torus", "all"), default="exact")
    v.add_argument("--format", choices=("table", "json"), default="table")
    return p


def _cmd_kernel(args, seed, out) -> int:
    kernel = build_kernel(args.exact_radius)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x", "y", "a"])
    for p in args.point:
        w.writerow([p.x, p.y, f"{kernel(p):.12f}"])
    return EXIT_OK


def _cmd_cap(args, seed, out) -> int:
    kernel = build_kernel(args.exact_radius)
    prof = analyze(LatticeSet(args.points), kernel)
    out.write(report_json(prof.as_dict(), {"exact_radius": args.exact_radius}) + "\n")
    return EXIT_OK


def _cmd_walk(args, seed, out) -> int:
    kernel = build_kernel(args.exact_radius)
    if args.mode == "srw":
        path = srw_path(args.start, args.steps, seed)
    else:
        kill = args.kill_radius
        if kill is None:
            kill = min(64.0 * args.window_radius, kernel.exact_radius - 2.0)
        path = hat_run_until_escape(args.start, args.window_radius, kill, kernel, seed)
    if args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["x", "y"])
        w.writerows(path.steps.tolist())
    else:
        inside = path.restrict(args.window_radius)
        summary = {
            "kind": path.kind,
            "length": len(path),
            "start": path.steps[0],
            "end": path.steps[-1],
            "visits_in_window": len(inside),
            "bias_bound": path.bias_bound,
        }
        config = {"mode": args.mode, "start": list(args.start), "seed": seed.seed, "steps": args.steps,
                  "window_radius": args.window_radius, "kill_radius": args.kill_radius}
        out.write(report_json(summary, config) + "\n")
    return EXIT_OK


def write_pgm(path: Path, mask: np.ndarray):
    """8-bit binary PGM; row 0 is the top (largest y), column 0 the smallest x."""
    img = np.where(mask.T[::-1], 255, 0).astype(np.uint8)
    h, w = img.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def _cmd_sample_vacant(args, seed, out) -> int:
    kernel = build_kernel(args.exact_radius)
    levels = sorted(args.levels)
    if not levels:
        raise UsageError("--levels needs at least one value")
    cfg = InterlacementConfig(args.radius, levels, seed=seed)
    grids = vacant_grids(sample_soup(cfg, kernel), levels)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    for g in grids:
        f = args.output_dir / f"{args.prefix}_alpha{g.level:g}.{args.out}"
        if args.out == "pgm":
            write_pgm(f, g.vacant)
        elif args.out == "csv":
            with f.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "y"])
                w.writerows(sorted(g.vacant_points()))
        else:
            payload = {"level": g.level, "vacant_count": g.vacant_count, "vacant": sorted(g.vacant_points())}
            f.write_text(report_json(payload, {"radius": args.radius, "seed": seed.seed}) + "\n")
        out.write(f"{f}\talpha={g.level:g}\tvacant={g.vacant_count}\n")
    return EXIT_OK


def _cmd_torus(args, seed, out) -> int:
    est = conditional_uncovered_estimate(args.n, args.alpha, args.points, args.replicas, seed,
                                         threads=max(1, args.threads))
    config = {"n": args.n, "alpha": args.alpha, "set": [list(p) for p in args.points],
              "replicas": args.replicas, "seed": seed.seed}
    out.write(report_json(est.as_dict(), config) + "\n")
    return EXIT_OK


def _cmd_verify(args, seed, out) -> int:
    from .verify import run_suite

    echo = (lambda line: (out.write(line + "\n"), out.flush())) if args.format == "table" else None
    results = run_suite(args.suite, seed, echo=echo)
    ok = all(r.passed for r in results)
    if args.format == "json":
        payload = {"suite": args.suite, "passed": ok, "criteria": [r.as_dict() for r in results]}
        out.write(report_json(payload, {"seed": seed.seed, "suite": args.suite}) + "\n")
    else:
        out.write(f"{sum(r.passed for r in results)}/{len(results)} criteria passed\n")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "kernel": _cmd_kernel,
    "cap": _cmd_cap,
    "walk": _cmd_walk,
    "sample-vacant": _cmd_sample_vacant,
    "torus": _cmd_torus,
    "verify": _cmd_verify,
}


def main(argv=None, out: io.TextIOBase | None = None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("ri2d: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    seed = RngSeed.from_env() if args.seed is None else RngSeed(args.seed)
    try:
        return COMMANDS[args.command](args, seed, out)
    except (UsageError, ValueError, DegenerateSetError, InsufficientSamplesError, MemoryError) as e:
        print(f"ri2d {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
