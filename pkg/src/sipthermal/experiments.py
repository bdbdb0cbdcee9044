"""Scenario files, single runs and FSPDN/BSPDN sweeps."""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import powermap as pmod
from .metrics import export_heatmap, field_summary, format_table, write_sidecar
from .powermap import PowerMap, PowerMapError, load_power_map, resample
from .refine import LocalResult, RefineError, extract_boundary, solve_local, window_around
from .solver import MeshError, SolverError, assemble, attach_power, discretize, solve
from .stackmodel import PackageStack, Preset, StackError, build_preset, compute_die_rect, load_stack

log = logging.getLogger(__name__)

DEFAULT_CORE_POWER_W = 2.0
DEFAULT_CORE_MM = (0.5, 0.5)
DEFAULT_MAP_PITCH_UM = 5.0
DEFAULT_GLOBAL_PITCH_UM = 200.0
DEFAULT_FINE_PITCH_UM = 5.0
DEFAULT_LOCAL_LAYERS = ("interposer", "tim")
DEFAULT_CLUSTER_PEAK_RATIO = 2.0
WORKLOAD_PROXY = {"block": 25, "peak_ratio": 3.0, "seed": 4242}
PDN_PRESETS = {"FSPDN": Preset.STACK1_FSPDN, "BSPDN": Preset.STACK2_BSPDN}
GENERATORS = ("uniform", "clustered", "center_focused", "workload_proxy", "file")

DATA_DIR = Path(__file__).parent / "data"
DESK_MATRIX = DATA_DIR / "matrix_desk.json"
FULL_MATRIX = DATA_DIR / "matrix_full.json"

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    pdn: str = "FSPDN"
    stack: dict = field(default_factory=dict)      # {"preset": ...} or {"file": ...}
    power: dict = field(default_factory=dict)
    core_size_mm: tuple = DEFAULT_CORE_MM
    core_centers_mm: list | None = None
    io_power_w: float = 0.0
    global_pitch_um: float = DEFAULT_GLOBAL_PITCH_UM
    global_z_policy: str = "max_aspect(8)"
    global_power: str = "map"                     # "map" or "uniform"
    refine: dict | None = None
    tol: float = 1e-8
    preconditioner: str = "auto"
    label: str = ""
    out_dir: str | None = None
    base_dir: str = "."
    defaults_used: list = field(default_factory=list)

    @property
    def map_label(self) -> str:
        return self.label or self.power.get("label") or self.power.get("generator", "uniform")


KNOWN_KEYS = {
    "name", "pdn", "stack", "power", "core", "io_power_w", "global_pitch_um", "global_z_policy",
    "global_power", "refine", "solver", "label", "out_dir",
}


def scenario_from_dict(data: dict, base_dir=".") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(data) - KNOWN_KEYS
    if extra:
        raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
    if "name" not in data:
        raise ScenarioError("scenario needs a 'name'")
    used = []
    pdn = str(data.get("pdn", "FSPDN")).upper()
    if pdn not in PDN_PRESETS:
        raise ScenarioError(f"unknown pdn {pdn!r}; expected one of {sorted(PDN_PRESETS)}")
    stack = dict(data.get("stack") or {"preset": PDN_PRESETS[pdn].value})
    if "preset" in stack:
        try:
            Preset(stack["preset"])
        except ValueError:
            raise ScenarioError(f"unknown preset {stack['preset']!r}") from None
    elif "file" in stack:
        p = Path(base_dir) / stack["file"]
        if not p.is_file():
            raise ScenarioError(f"stack file not found: {p}")
    else:
        raise ScenarioError("'stack' needs 'preset' or 'file'")

    power = dict(data.get("power") or {})
    gen = power.setdefault("generator", "uniform")
    if gen not in GENERATORS:
        raise ScenarioError(f"unknown power generator {gen!r}")
    if "total_w" not in power and gen != "file":
        power["total_w"] = DEFAULT_CORE_POWER_W
        used.append(f"per-core power defaulted to {DEFAULT_CORE_POWER_W} W (not published)")
    if gen == "file":
        p = Path(base_dir) / power.get("path", "")
        if not p.is_file():
            raise ScenarioError(f"power map file not found: {p}")
    if gen == "clustered":
        pr = power.get("params", {}).get("peak_ratio")
        used.append("clustered kernel: truncated cone, "
                    + (f"peak_ratio={DEFAULT_CLUSTER_PEAK_RATIO} (default)" if pr is None else f"peak_ratio={pr}"))
    if gen == "workload_proxy":
        used.append("workload-proxy: synthetic clustered stand-in for the post-PnR Dhrystone map "
                    f"(block={WORKLOAD_PROXY['block']}, peak_ratio={WORKLOAD_PROXY['peak_ratio']}, "
                    f"seed={WORKLOAD_PROXY['seed']})")

    core = dict(data.get("core") or {})
    if "size_mm" not in core:
        used.append(f"core footprint defaulted to {DEFAULT_CORE_MM[0]}x{DEFAULT_CORE_MM[1]} mm")
    if "io_power_w" not in data:
        used.append("IO chiplet power defaulted to 0 W")

    refine = data.get("refine")
    if refine is not None:
        refine = dict(refine)
        if "fine_pitch_um" not in refine:
            refine["fine_pitch_um"] = DEFAULT_FINE_PITCH_UM
        if "layers" not in refine:
            used.append(f"local window layer span defaulted to {DEFAULT_LOCAL_LAYERS[0]}..{DEFAULT_LOCAL_LAYERS[1]}")
    solver = dict(data.get("solver") or {})
    gp = data.get("global_power", "map")
    if gp not in ("map", "uniform"):
        raise ScenarioError(f"global_power must be 'map' or 'uniform', got {gp!r}")

    try:
        sc = Scenario(
            name=str(data["name"]),
            pdn=pdn,
            stack=stack,
            power=power,
            core_size_mm=tuple(float(v) for v in core.get("size_mm", DEFAULT_CORE_MM)),
            core_centers_mm=core.get("centers_mm"),
            io_power_w=float(data.get("io_power_w", 0.0)),
            global_pitch_um=float(data.get("global_pitch_um", DEFAULT_GLOBAL_PITCH_UM)),
            global_z_policy=str(data.get("global_z_policy", "max_aspect(8)")),
            global_power=gp,
            refine=refine,
            tol=float(solver.get("tol", 1e-8)),
            preconditioner=str(solver.get("preconditioner", "auto")),
            label=str(data.get("label", "")),
            out_dir=data.get("out_dir"),
            base_dir=str(base_dir),
            defaults_used=used,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario {data.get('name')!r}: {exc}") from None
    if sc.global_pitch_um <= 0 or sc.tol <= 0:
        raise ScenarioError("global_pitch_um and solver.tol must be positive")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(data, path.parent)


def resolve_stack(sc: Scenario) -> PackageStack:
    if "preset" in sc.stack:
        return build_preset(sc.stack["preset"])
    return load_stack(Path(sc.base_dir) / sc.stack["file"])


def core_rects(sc: Scenario, stack: PackageStack) -> list[tuple]:
    """Core rectangles, by default one core centred on the computing chiplet
    and aligned with the global grid."""
    w, h = sc.core_size_mm
    if sc.core_centers_mm:
        centres = [tuple(c) for c in sc.core_centers_mm]
    else:
        try:
            lay = stack.layer(sc.power.get("layer", pmod.DEFAULT_LAYER))
            x0, y0, x1, y1 = lay.rect
        except KeyError:
            x0, y0, x1, y1 = compute_die_rect()
        centres = [((x0 + x1) / 2, (y0 + y1) / 2)]
    g = sc.global_pitch_um * 1e-3
    rects = []
    for cx, cy in centres:
        ox = round((cx - w / 2) / g) * g
        oy = round((cy - h / 2) / g) * g
        rects.append((ox, oy, ox + w, oy + h))
    return rects


def build_core_map(sc: Scenario, core: tuple) -> PowerMap:
    pw = sc.power
    gen = pw.get("generator", "uniform")
    layer = pw.get("layer", pmod.DEFAULT_LAYER)
    origin = (core[0], core[1])
    if gen == "file":
        pm = load_power_map(Path(sc.base_dir) / pw["path"])
        return pm.moved(origin=origin) if pw.get("place_at_core", True) else pm
    pitch = float(pw.get("pitch_um", DEFAULT_MAP_PITCH_UM))
    nx = round((core[2] - core[0]) * 1e3 / pitch)
    ny = round((core[3] - core[1]) * 1e3 / pitch)
    if abs(nx * pitch - (core[2] - core[0]) * 1e3) > 1e-6 or abs(ny * pitch - (core[3] - core[1]) * 1e3) > 1e-6:
        raise ScenarioError(f"core size {sc.core_size_mm} mm is not a whole number of {pitch} um map cells")
    total = float(pw["total_w"])
    params = dict(pw.get("params", {}))
    if gen == "uniform":
        return pmod.gen_uniform(total, nx, ny, pitch, origin, layer)
    if gen == "clustered":
        return pmod.gen_clustered(
            total, nx, ny, pitch,
            block=int(params.get("block", 25)),
            peak_ratio=float(params.get("peak_ratio", DEFAULT_CLUSTER_PEAK_RATIO)),
            seed=int(pw.get("seed", params.get("seed", 0))),
            origin=origin, layer=layer,
        )
    if gen == "center_focused":
        return pmod.gen_center_focused(
            total, nx, ny, pitch,
            concentration=float(params.get("concentration", 0.25)),
            background=float(params.get("background", 0.0)),
            origin=origin, layer=layer,
        )
    return pmod.gen_clustered(
        total, nx, ny, pitch, block=WORKLOAD_PROXY["block"], peak_ratio=WORKLOAD_PROXY["peak_ratio"],
        seed=WORKLOAD_PROXY["seed"], origin=origin, layer=layer,
    )


# Assembled global systems keyed by geometry: the matrix and its AMG
# hierarchy are shared between scenarios that only differ in power.
_SYSTEM_CACHE: dict = {}
_CACHE_SIZE = 2


def _cached_system(stack, pitch, z_policy):
    from .stackmodel import stack_to_dict

    key = (json.dumps(stack_to_dict(stack), sort_keys=True), pitch, z_policy)
    if key not in _SYSTEM_CACHE:
        while len(_SYSTEM_CACHE) >= _CACHE_SIZE:
            _SYSTEM_CACHE.pop(next(iter(_SYSTEM_CACHE)))
        mesh = discretize(stack, pitch, z_policy)
        _SYSTEM_CACHE[key] = (mesh, assemble(mesh))
    return _SYSTEM_CACHE[key]


def clear_cache():
    _SYSTEM_CACHE.clear()


def _io_map(stack, watts, pitch):
    lay = stack.layer("io_die")
    nx = max(1, round(lay.dx * 1e3 / pitch))
    ny = max(1, round(lay.dy * 1e3 / pitch))
    p = lay.dx * 1e3 / nx
    if abs(lay.dy * 1e3 / ny - p) > 1e-9:
        # non-square cells are not representable; use the finer pitch
        p = min(p, lay.dy * 1e3 / ny)
        nx, ny = math.floor(lay.dx * 1e3 / p), math.floor(lay.dy * 1e3 / p)
    return pmod.gen_uniform(watts, nx, ny, p, lay.offset, "io_die")


def _clean(obj):
    """JSON-ready copy with plain floats and NaN -> None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def run_scenario(sc: Scenario, out_dir=None, deterministic=True, write=True) -> dict:
    """Global solve, optional refinement of the hottest core, metrics.

    A solver failure leaves ``FAILED.txt`` next to any artifacts already
    written so partial output is never mistaken for a finished run.
    """
    out_dir = out_dir or sc.out_dir
    try:
        return _run_scenario(sc, out_dir if write else None, deterministic)
    except SolverError as exc:
        if write and out_dir:
            d = Path(out_dir) / sc.name
            d.mkdir(parents=True, exist_ok=True)
            (d / "FAILED.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        raise


def _run_scenario(sc: Scenario, out_dir, deterministic) -> dict:
    stack = resolve_stack(sc)
    layer = sc.power.get("layer", pmod.DEFAULT_LAYER)
    if layer not in stack.names:
        raise ScenarioError(f"power layer {layer!r} not in stack {stack.name or '<file>'}")
    cores = core_rects(sc, stack)
    maps = [build_core_map(sc, c) for c in cores]
    for m in maps:
        pmod.check_fits(m, stack)

    gmesh, gsys = _cached_system(stack, sc.global_pitch_um, sc.global_z_policy)
    mesh = gmesh
    for m in maps:
        if sc.global_power == "uniform":
            m = pmod.gen_uniform(pmod.total_power(m), m.nx, m.ny, m.pitch, m.origin, m.target_layer)
        mesh = attach_power(mesh, m)
    if sc.io_power_w > 0:
        mesh = attach_power(mesh, _io_map(stack, sc.io_power_w, sc.global_pitch_um))
    solve_kw = dict(tol=sc.tol, preconditioner=sc.preconditioner, deterministic=deterministic)
    gfield = solve(gsys.with_power(mesh), **solve_kw)

    if len(cores) > 1:
        from .refine import hottest_core

        focus = hottest_core(gfield, cores, layer)
    else:
        focus = 0
    core = cores[focus]
    ambient = stack.top.ambient

    report = {
        "scenario": sc.name,
        "pdn": sc.pdn,
        "stack": stack.name or sc.stack.get("file", ""),
        "map": sc.map_label,
        "generator": sc.power.get("generator", "uniform"),
        "seed": sc.power.get("seed", sc.power.get("params", {}).get("seed")),
        "total_power_w": pmod.total_power(maps[focus]),
        "core_mm": list(core),
        "ambient_c": ambient,
        "global_power": sc.global_power,
        "global": field_summary(gfield, layer, core),
    }
    assumptions = list(stack.assumptions) + list(sc.defaults_used)
    if sc.global_power == "map":
        assumptions.append("global solve carries each core map upscaled (area-weighted) to the global pitch")
    else:
        assumptions.append("global solve uses uniform core power; the fine map enters only the local window")

    local: LocalResult | None = None
    if sc.refine is not None:
        rf = sc.refine
        fine = float(rf["fine_pitch_um"])
        window = window_around(
            stack, core, fine, sc.global_pitch_um,
            int(rf.get("margin_cells", 2)),
            tuple(rf.get("layers", DEFAULT_LOCAL_LAYERS)),
            rf.get("z_policy", "max_aspect(2)"),
        )
        bcs = extract_boundary(gfield, window)
        fmap = maps[focus]
        method = rf.get("resample", "area_weighted")
        if fmap.pitch != fine:
            fmap = resample(fmap, fine, method)
            if method == "bilinear_filtered":
                assumptions.append("map resampling: bilinear interpolation + 3x3 [1,2,1] smoothing")
        local = solve_local(stack, window, fmap, bcs, gfield, layer=layer, **solve_kw)
        report["local"] = field_summary(local.field, layer, core)
        report["local"]["window_mm"] = list(window.rect)
        report["local"]["layers"] = list(window.layers) if window.layers else None
        report["local"]["bc_range_c"] = [bcs.t_min, bcs.t_max]
        assumptions.append(
            f"one-pass global-local coupling with fixed-temperature cut faces, margin "
            f"{int(rf.get('margin_cells', 2))} coarse cells"
        )

    peak_c = report["local"]["core_peak_c"] if local is not None else report["global"]["core_peak_c"]
    report["peak_c"] = peak_c
    report["peak_rise_k"] = peak_c - ambient
    report["global_core_peak_c"] = report["global"]["core_peak_c"]
    report["assumptions"] = assumptions

    if out_dir:
        d = Path(out_dir) / sc.name
        d.mkdir(parents=True, exist_ok=True)
        (d / "FAILED.txt").unlink(missing_ok=True)
        (d / "report.json").write_text(dump_json(report))
        (d / "assumptions.txt").write_text("\n".join(assumptions) + "\n")
        export_heatmap(gfield, layer, d / f"global_{layer}.ppm")
        write_sidecar(gfield, d / "global_meta.txt")
        if local is not None:
            export_heatmap(local.field, layer, d / f"local_{layer}.ppm")
            write_sidecar(local.field, d / "local_meta.txt")
    return report


# --------------------------------------------------------------------------
# Sweeps

def expand_matrix(data: dict, base_dir=".") -> list[Scenario]:
    """Scenarios from ``{"scenarios": [...]}`` or a ``{"matrix": ...}`` block."""
    if "scenarios" in data:
        return [scenario_from_dict(s, base_dir) for s in data["scenarios"]]
    if "matrix" not in data:
        raise ScenarioError("sweep file needs 'scenarios' or 'matrix'")
    mx = data["matrix"]
    base = dict(mx.get("base", {}))
    out = []
    for entry in mx.get("maps", [{"label": "uniform", "power": {"generator": "uniform"}}]):
        for pdn in mx.get("pdn", ["FSPDN", "BSPDN"]):
            s = copy.deepcopy(base)
            s["pdn"] = pdn
            s["power"] = {**base.get("power", {}), **entry.get("power", {})}
            s["label"] = entry.get("label", s["power"].get("generator", "uniform"))
            s["name"] = f"{pdn}-{s['label']}"
            out.append(scenario_from_dict(s, base_dir))
    return out


def load_sweep(path) -> list[Scenario]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return expand_matrix(data, path.parent)


def _run_one(args):
    sc, out_dir, deterministic = args
    try:
        return run_scenario(sc, out_dir, deterministic), None
    except (ScenarioError, StackError, PowerMapError, MeshError, RefineError, SolverError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(scenarios: list[Scenario], out_dir=None, threads=1, deterministic=True) -> dict:
    """Run every scenario; pair FSPDN/BSPDN runs by map label.

    Scenario failures are recorded and the sweep carries on.
    """
    jobs = [(sc, out_dir, deterministic) for sc in scenarios]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    runs, failures = [], []
    by_map: dict[str, dict[str, dict]] = {}
    for sc, (rep, err) in zip(scenarios, results):
        if err is not None:
            failures.append({"scenario": sc.name, "error": err})
            continue
        runs.append({
            "scenario": sc.name,
            "pdn": sc.pdn,
            "map": sc.map_label,
            "peak_c": rep["peak_c"],
            "peak_rise_k": rep["peak_rise_k"],
            "global_core_peak_c": rep["global_core_peak_c"],
            "top_fraction": rep["global"]["energy"]["top_fraction"],
            "core_mm": rep["core_mm"],
            "refined": "local" in rep,
        })
        by_map.setdefault(sc.map_label, {})[sc.pdn] = runs[-1]

    deltas, pair_errors = [], []
    for label, pair in by_map.items():
        if "FSPDN" not in pair or "BSPDN" not in pair:
            continue
        f, b = pair["FSPDN"], pair["BSPDN"]
        if not np.allclose(f["core_mm"], b["core_mm"], atol=1e-9) or f["refined"] != b["refined"]:
            pair_errors.append({"map": label, "error": "incompatible footprints or refinement levels"})
            continue
        deltas.append({
            "map": label,
            "fspdn_peak_c": f["peak_c"],
            "bspdn_peak_c": b["peak_c"],
            "delta_k": b["peak_c"] - f["peak_c"],
            "global_delta_k": b["global_core_peak_c"] - f["global_core_peak_c"],
        })
    ordering = {}
    for pdn in ("FSPDN", "BSPDN"):
        rs = [r for r in runs if r["pdn"] == pdn]
        ordering[pdn] = [r["map"] for r in sorted(rs, key=lambda r: (r["peak_rise_k"], r["map"]))]
    report = {
        "runs": runs,
        "deltas": deltas,
        "ordering_by_peak_rise": ordering,
        "failures": failures,
        "pair_errors": pair_errors,
    }
    check_sweep_report(report)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep_report.json").write_text(dump_json(report))
    return report


def check_sweep_report(report: dict) -> None:
    """Every delta must be recomputable from the stored per-run peaks."""
    peaks = {(r["map"], r["pdn"]): r["peak_c"] for r in report["runs"]}
    for d in report["deltas"]:
        f, b = peaks[(d["map"], "FSPDN")], peaks[(d["map"], "BSPDN")]
        if (f, b) != (d["fspdn_peak_c"], d["bspdn_peak_c"]) or d["delta_k"] != b - f:
            raise ScenarioError(f"sweep report inconsistent for map {d['map']!r}")


def sweep_table(report: dict) -> str:
    rows = [
        (d["map"], f"{d['fspdn_peak_c']:.3f}", f"{d['bspdn_peak_c']:.3f}", f"{d['delta_k']:+.3f}")
        for d in report["deltas"]
    ]
    text = format_table(rows, ("map", "FSPDN peak degC", "BSPDN peak degC", "BSPDN-FSPDN K"))
    for f in report["failures"]:
        text += f"\nFAILED {f['scenario']}: {f['error']}"
    for e in report["pair_errors"]:
        text += f"\nPAIR {e['map']}: {e['error']}"
    return text
