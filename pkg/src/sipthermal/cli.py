"""Command line entry point: ``sipthermal <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from . import powermap as pmod
from .metrics import MetricsError, load_plane_csv, write_ppm
from .powermap import PowerMapError
from .refine import RefineError
from .solver import ConvergenceError, MeshError, SolverError
from .stackmodel import StackError, load_stack

VALIDATION_ERRORS = (ex.ScenarioError, StackError, PowerMapError, MeshError, RefineError, MetricsError)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ex.ScenarioError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None


def cmd_validate(args) -> int:
    for path in args.files:
        data = _read_json(path)
        if "layers" in data:
            stack = load_stack(path)
            for w in stack.warnings:
                print(f"{path}: warning: {w}")
            kind = f"stack with {len(stack.layers)} layers"
        elif "matrix" in data or "scenarios" in data:
            kind = f"sweep with {len(ex.load_sweep(path))} scenarios"
        else:
            sc = ex.load_scenario(path)
            stack = ex.resolve_stack(sc)
            for m in (ex.build_core_map(sc, c) for c in ex.core_rects(sc, stack)):
                pmod.check_fits(m, stack)
            kind = f"scenario {sc.name!r}"
        print(f"{path}: ok ({kind})")
    return ex.EXIT_OK


def cmd_run(args) -> int:
    sc = ex.load_scenario(args.scenario)
    if args.global_only:
        sc.refine = None
    rep = ex.run_scenario(sc, args.out_dir, args.deterministic)
    line = f"{sc.name}: peak {rep['peak_c']:.4f} degC (rise {rep['peak_rise_k']:.4f} K)"
    e = rep["global"]["energy"]
    line += f", top fraction {e['top_fraction']:.4f}"
    print(line)
    if args.out_dir:
        print(f"artifacts in {Path(args.out_dir) / sc.name}")
    return ex.EXIT_OK


def cmd_sweep(args) -> int:
    scenarios = ex.load_sweep(args.sweep)
    if args.global_only:
        for sc in scenarios:
            sc.refine = None
    rep = ex.run_sweep(scenarios, args.out_dir, args.threads, args.deterministic)
    print(ex.sweep_table(rep))
    if rep["failures"] or rep["pair_errors"]:
        return ex.EXIT_CONVERGENCE if any("Convergence" in f["error"] for f in rep["failures"]) else ex.EXIT_VALIDATION
    return ex.EXIT_OK


def cmd_gen_map(args) -> int:
    origin = tuple(float(v) for v in args.origin.split(","))
    common = dict(origin=origin, layer=args.layer)
    if args.generator == "uniform":
        pm = pmod.gen_uniform(args.total, args.nx, args.ny, args.pitch, **common)
    elif args.generator == "clustered":
        pm = pmod.gen_clustered(args.total, args.nx, args.ny, args.pitch, block=args.block,
                                peak_ratio=args.peak_ratio, seed=args.seed, **common)
    elif args.generator == "center_focused":
        pm = pmod.gen_center_focused(args.total, args.nx, args.ny, args.pitch,
                                     concentration=args.concentration, background=args.background, **common)
    else:
        wp = ex.WORKLOAD_PROXY
        pm = pmod.gen_clustered(args.total, args.nx, args.ny, args.pitch, block=wp["block"],
                                peak_ratio=wp["peak_ratio"], seed=wp["seed"], **common)
    pmod.save_power_map(pm, args.output)
    print(f"wrote {args.output}: {pm.nx}x{pm.ny} cells, {pmod.total_power(pm):.6g} W")
    return ex.EXIT_OK


def cmd_export(args) -> int:
    plane, meta = load_plane_csv(args.csv)
    if plane.size == 0:
        raise MetricsError(f"{args.csv}: no data rows")
    scale = "auto" if args.scale is None else tuple(float(v) for v in args.scale.split(","))
    out = args.output or str(Path(args.csv).with_suffix(".ppm"))
    lo, hi = write_ppm(plane, out, scale)
    print(f"wrote {out} ({plane.shape[1]}x{plane.shape[0]}, scale {lo:.4g}..{hi:.4g} {meta.get('unit', '')})")
    return ex.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sipthermal", description="Steady-state chiplet package thermal simulator")
    p.add_argument("--threads", type=int, default=1, help="concurrent scenario runs in a sweep")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="ordered reductions in the solver (default on)")
    p.add_argument("--out-dir", default=None, help="directory for reports and exports")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("validate", help="check stack, scenario or sweep files without solving")
    v.add_argument("files", nargs="+")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario")
    r.add_argument("--global-only", action="store_true", help="skip local refinement")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario list or matrix and compare BSPDN with FSPDN")
    s.add_argument("sweep")
    s.add_argument("--global-only", action="store_true")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen-map", help="write a synthetic power map CSV")
    g.add_argument("generator", choices=["uniform", "clustered", "center_focused", "workload_proxy"])
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--total", type=float, default=ex.DEFAULT_CORE_POWER_W, help="watts")
    g.add_argument("--nx", type=int, default=100)
    g.add_argument("--ny", type=int, default=100)
    g.add_argument("--pitch", type=float, default=ex.DEFAULT_MAP_PITCH_UM, help="um")
    g.add_argument("--origin", default="0,0", help="x,y in mm")
    g.add_argument("--layer", default=pmod.DEFAULT_LAYER)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--block", type=int, default=25)
    g.add_argument("--peak-ratio", type=float, default=ex.DEFAULT_CLUSTER_PEAK_RATIO)
    g.add_argument("--concentration", type=float, default=0.25)
    g.add_argument("--background", type=float, default=0.0)
    g.set_defaults(func=cmd_gen_map)

    e = sub.add_parser("export", help="render a plane CSV (temperature or power) as a PPM heatmap")
    e.add_argument("csv")
    e.add_argument("-o", "--output")
    e.add_argument("--scale", help="lo,hi colour range; default is the data range")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_CONVERGENCE
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_VALIDATION
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
