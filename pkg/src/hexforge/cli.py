"""
Command line entry point.

Subcommands::

    segment    surface segmentation into axis patches
    polycube   polycube structure from a segmentation
    map        all-hex mesh from a polycube
    quality    pillowing, smoothing and optimization
    spline     hierarchical spline and BEXT output
    pipeline   every stage, driven by a JSON config

Exit codes: 0 success, 1 a stage failed, 2 bad usage.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline as pl
from .errors import HexforgeError, StageError, UsageError

log = logging.getLogger("hexforge")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _threads_default() -> int:
    env = os.environ.get("HEXFORGE_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $HEXFORGE_THREADS or 1)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    p = _Parser(prog="hexforge", description="Polycube all-hex meshing and hierarchical spline extraction.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    s = sub.add_parser("segment", parents=[common], help="CVT segmentation of a triangle surface")
    s.add_argument("-i", required=True, metavar="in.k", help="triangle mesh")
    s.add_argument("-o", required=True, metavar="out.k", help="segmented mesh, part id = patch")
    s.add_argument("-m", metavar="overrides.txt", help="manual 'element patch' reassignments")
    s.add_argument("-l", type=float, default=0.1, metavar="omega", help="boundary-enhancement weight (0.1)")
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-6)

    s = sub.add_parser("polycube", parents=[common], help="polycube structure from a segmented surface")
    s.add_argument("-i", required=True, metavar="seg.k")
    s.add_argument("-o", required=True, metavar="structure.k")
    s.add_argument("-c", type=int, choices=(0, 1), default=0, help="1: also write corner/edge/face files")
    s.add_argument("--cells", metavar="cells.txt", help="8 corner ids per row")
    s.add_argument("--interior-corners", metavar="corners.txt", help="'id x y z' rows for interior corners")

    s = sub.add_parser("map", parents=[common], help="parametric mapping to an all-hex mesh")
    s.add_argument("-i", required=True, metavar="seg.k")
    s.add_argument("-p", required=True, metavar="structure.k")
    s.add_argument("-o", required=True, metavar="out.vtk")
    s.add_argument("-s", type=int, default=1, metavar="level", help="octree level (1)")

    s = sub.add_parser("quality", parents=[common], help="pillowing, smoothing and optimization")
    s.add_argument("-i", required=True, metavar="in.vtk")
    s.add_argument("-o", required=True, metavar="out.vtk")
    s.add_argument("-Q", action="store_true", help="quality improvement mode (accepted for compatibility)")
    s.add_argument("-m", type=int, choices=(1, 2, 3), required=True, help="1 pillow, 2 smooth, 3 optimize")
    s.add_argument("-n", type=int, default=None, help="layers (pillow) or iterations")
    s.add_argument("-p", type=float, default=0.001, help="step size in (0, 1]")
    s.add_argument("-s", type=int, choices=(0, 1, 2), default=0, help="sharp features: 0 none, 1 detect, 2 file")
    s.add_argument("-t", type=float, default=0.8, help="sharp detection dot-product threshold")
    s.add_argument("--sharp", metavar="sharp.txt", help="sharp vertex ids for -s 2")

    s = sub.add_parser("spline", parents=[common], help="truncated hierarchical spline and BEXT output")
    s.add_argument("-i", required=True, metavar="in.vtk")
    s.add_argument("-o", required=True, metavar="out.bext")
    s.add_argument("-S", action="store_true", help="spline construction mode (accepted for compatibility)")
    s.add_argument("-s", type=int, choices=(0, 1, 2), default=0, help="sharp features: 0 none, 1 detect, 2 file")
    s.add_argument("-t", type=float, default=0.8)
    s.add_argument("--sharp", metavar="sharp.txt")
    g = s.add_mutually_exclusive_group()
    g.add_argument("-g", type=int, default=0, metavar="levels", help="global refinement levels")
    g.add_argument("-l", action="store_true", help="local refinement from --rfid files")
    s.add_argument("--rfid", action="append", default=[], metavar="lev_rfid.txt",
                   help="cells to refine; the k-th file defaults to level k (repeatable)")

    s = sub.add_parser("pipeline", parents=[common], help="run all stages from a JSON config")
    s.add_argument("config")
    s.add_argument("--stop-after", choices=pl.STAGES)
    return p


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _validate(args) -> None:
    cmd = args.command
    if args.threads is not None:
        _check(args.threads >= 1, "--threads must be >= 1")
    if cmd == "segment":
        _check(args.l >= 0, "-l (omega) must be >= 0")
        _check(args.max_iter >= 1, "--max-iter must be >= 1")
    elif cmd == "map":
        _check(0 <= args.s <= 8, "-s (octree level) must be in 0..8")
    elif cmd == "quality":
        _check(0 < args.p <= 1, "-p (step) must be in (0, 1]")
        _check(args.n is None or args.n >= 0, "-n must be >= 0")
        _check(-1 <= args.t <= 1, "-t must be in [-1, 1]")
        _check(args.s != 2 or args.sharp is not None, "-s 2 needs --sharp sharp.txt")
    elif cmd == "spline":
        _check(args.g >= 0, "-g must be >= 0")
        _check(-1 <= args.t <= 1, "-t must be in [-1, 1]")
        _check(args.s != 2 or args.sharp is not None, "-s 2 needs --sharp sharp.txt")
        _check(not args.l or args.rfid, "-l needs at least one --rfid file")
        _check(args.l or not args.rfid, "--rfid is only used with -l")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(f"hexforge: usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="hexforge: %(message)s", stream=sys.stderr, force=True)
    threads = args.threads if args.threads is not None else _threads_default()
    try:
        if args.command == "segment":
            pl.run_segment(args.i, args.o, args.m, args.l, args.max_iter, args.tol)
        elif args.command == "polycube":
            pl.run_polycube(args.i, args.o, args.cells, args.interior_corners, args.c == 1)
        elif args.command == "map":
            pl.run_map(args.i, args.p, args.o, args.s, threads)
        elif args.command == "quality":
            n = args.n if args.n is not None else {1: 1, 2: 50, 3: 15}[args.m]
            pl.run_quality(args.i, args.o, [(args.m, n, args.p)], args.s, args.t, args.sharp)
        elif args.command == "spline":
            pl.run_spline(args.i, args.o, args.s, args.t, args.sharp, args.g, args.rfid if args.l else ())
        elif args.command == "pipeline":
            pl.Pipeline(args.config, threads).run(args.stop_after)
    except UsageError as exc:
        print(f"hexforge: usage error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"hexforge: error: {exc}", file=sys.stderr)
        return 1
    except (HexforgeError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"hexforge: error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
