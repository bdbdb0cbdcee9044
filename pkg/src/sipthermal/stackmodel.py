"""Layered package geometry, materials and convective boundary conditions.

Units at the boundary: mm in-plane, um for thicknesses and z positions,
W/(m K) for conductivity, W/(m^2 K) for heat transfer coefficients and
degC for ambient temperatures.  Everything downstream converts to SI.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

# Relative slack used when comparing geometry that went through mm/um floats.
GEOM_EPS = 1e-9


class StackError(ValueError):
    """A stack file could not be parsed or failed validation."""


@dataclass(frozen=True)
class Material:
    name: str
    k: float


@dataclass(frozen=True)
class Layer:
    """One rectangular slab.

    ``offset`` is the lower-left corner of the footprint in the package
    plane (mm) and ``z`` the bottom of the slab (um).
    """

    name: str
    dx: float
    dy: float
    thickness: float
    material: Material
    offset: tuple[float, float] = (0.0, 0.0)
    z: float = 0.0

    @property
    def k(self) -> float:
        return self.material.k

    @property
    def z_top(self) -> float:
        return self.z + self.thickness

    @property
    def rect(self) -> tuple[float, float, float, float]:
        x0, y0 = self.offset
        return (x0, y0, x0 + self.dx, y0 + self.dy)


@dataclass(frozen=True)
class BoundaryCondition:
    side: str
    htc: float
    ambient: float = 25.0


@dataclass(frozen=True)
class PackageStack:
    layers: tuple[Layer, ...]
    gap_fill: Material
    top: BoundaryCondition
    bottom: BoundaryCondition
    name: str = ""
    warnings: tuple[str, ...] = ()
    assumptions: tuple[str, ...] = ()

    def layer(self, name: str) -> Layer:
        for lay in self.layers:
            if lay.name == name:
                return lay
        raise KeyError(f"no layer named {name!r}")

    @property
    def names(self) -> list[str]:
        return [lay.name for lay in self.layers]

    @property
    def height(self) -> float:
        return max(lay.z_top for lay in self.layers)

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """Bounding rectangle (x0, y0, x1, y1) of every layer, mm."""
        rects = [lay.rect for lay in self.layers]
        return (
            min(r[0] for r in rects),
            min(r[1] for r in rects),
            max(r[2] for r in rects),
            max(r[3] for r in rects),
        )

    @property
    def ambient(self) -> float:
        return self.top.ambient


def _overlap_1d(a0, a1, b0, b1, eps=GEOM_EPS) -> bool:
    return min(a1, b1) - max(a0, b0) > eps * max(1.0, abs(a1), abs(b1))


def _rects_overlap(r, s) -> bool:
    return _overlap_1d(r[0], r[2], s[0], s[2]) and _overlap_1d(r[1], r[3], s[1], s[3])


def _order_key(lay: Layer):
    return (lay.z, lay.offset[0], lay.offset[1])


def validate(stack: PackageStack) -> list[str]:
    """Return every violated invariant, bottom-to-top then by field name."""
    found: list[tuple[tuple, str, str]] = []

    def add(lay, fieldname, msg):
        found.append((_order_key(lay) if lay is not None else (math.inf,), fieldname, msg))

    seen_names: dict[str, Layer] = {}
    materials: dict[str, float] = {}
    for lay in stack.layers:
        if not lay.name:
            add(lay, "name", "layer with empty name")
        elif lay.name in seen_names:
            add(lay, "name", f"duplicate layer name {lay.name!r}")
        seen_names.setdefault(lay.name, lay)
        for fname in ("dx", "dy", "thickness"):
            val = getattr(lay, fname)
            if not (math.isfinite(val) and val > 0):
                add(lay, fname, f"layer {lay.name!r}: non-positive {fname} ({val})")
        if not (math.isfinite(lay.k) and lay.k > 0):
            add(lay, "k", f"layer {lay.name!r}: non-positive conductivity ({lay.k})")
        mname = lay.material.name
        if not mname:
            add(lay, "material", f"layer {lay.name!r}: empty material name")
        elif mname in materials and materials[mname] != lay.k:
            add(lay, "material", f"layer {lay.name!r}: material {mname!r} redefined with k={lay.k}")
        materials.setdefault(mname, lay.k)
        if lay.z < -GEOM_EPS:
            add(lay, "z", f"layer {lay.name!r}: negative z ({lay.z})")

    if not (math.isfinite(stack.gap_fill.k) and stack.gap_fill.k > 0):
        add(None, "gap_fill", f"gap fill: non-positive conductivity ({stack.gap_fill.k})")
    for bc, side in ((stack.top, "top"), (stack.bottom, "bottom")):
        if bc.side != side:
            add(None, "boundaries", f"boundary on {side} side is labelled {bc.side!r}")
        if not (math.isfinite(bc.htc) and bc.htc >= 0):
            add(None, "boundaries", f"{side} boundary: negative htc ({bc.htc})")
        if not math.isfinite(bc.ambient):
            add(None, "boundaries", f"{side} boundary: non-finite ambient")

    ordered = sorted(
        (lay for lay in stack.layers if lay.thickness > 0 and lay.dx > 0 and lay.dy > 0),
        key=_order_key,
    )
    # Pairwise overlap: same z range and same patch of the plane.
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            if b.z >= a.z_top:
                break
            if _overlap_1d(a.z, a.z_top, b.z, b.z_top) and _rects_overlap(a.rect, b.rect):
                add(a, "z", f"layers {a.name!r} and {b.name!r} overlap in z")

    if ordered:
        base = ordered[0].z
        if abs(base) > GEOM_EPS:
            add(ordered[0], "z", f"stack starts at z={base} um instead of 0")
        reach = base
        for lay in ordered:
            if lay.z > reach + GEOM_EPS * max(1.0, reach):
                add(lay, "z", f"vertical gap below layer {lay.name!r} ({reach}..{lay.z} um)")
            reach = max(reach, lay.z_top)

    # Containment: a layer must sit inside the hull of the layers it rests
    # on, unless it is a lone cap covering that whole hull (spreader, sink).
    fx0, fy0, fx1, fy1 = stack.footprint if stack.layers else (0, 0, 0, 0)
    tol = GEOM_EPS * max(1.0, fx1 - fx0, fy1 - fy0)
    for lay in ordered:
        below = [b for b in ordered if abs(b.z_top - lay.z) <= GEOM_EPS * max(1.0, lay.z)]
        if not below:
            continue
        bx0 = min(b.rect[0] for b in below)
        by0 = min(b.rect[1] for b in below)
        bx1 = max(b.rect[2] for b in below)
        by1 = max(b.rect[3] for b in below)
        x0, y0, x1, y1 = lay.rect
        inside = x0 >= bx0 - tol and y0 >= by0 - tol and x1 <= bx1 + tol and y1 <= by1 + tol
        covers = x0 <= bx0 + tol and y0 <= by0 + tol and x1 >= bx1 - tol and y1 >= by1 - tol
        siblings = [o for o in ordered if o is not lay and abs(o.z - lay.z) <= GEOM_EPS * max(1.0, lay.z)]
        if not inside and (siblings or not covers):
            names = ", ".join(b.name for b in below)
            add(lay, "offset", f"layer {lay.name!r} footprint exceeds supporting footprint ({names})")
    found.sort(key=lambda t: (t[0], t[1]))
    return [msg for _, _, msg in found]


def _stack_from_dict(data: dict, src: str = "<dict>") -> PackageStack:
    def ctx(msg):
        return StackError(f"{src}: {msg}")

    if not isinstance(data, dict):
        raise ctx("top level must be an object")
    raw_layers = data.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ctx("'layers' must be a non-empty array")

    layers = []
    z = 0.0
    for idx, raw in enumerate(raw_layers):
        where = f"layers[{idx}]"
        if not isinstance(raw, dict):
            raise ctx(f"{where}: expected an object")
        try:
            name = str(raw["name"])
            dx = float(raw["dx_mm"])
            dy = float(raw["dy_mm"])
            thick = float(raw["thickness_um"])
            k = float(raw["k_w_mk"])
        except KeyError as exc:
            raise ctx(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ctx(f"{where}: bad numeric field ({exc})") from None
        off = raw.get("offset_mm", [0.0, 0.0])
        if not (isinstance(off, (list, tuple)) and len(off) == 2):
            raise ctx(f"{where}.offset_mm: expected [x, y]")
        zb = float(raw["z_um"]) if "z_um" in raw else z
        mat = Material(str(raw.get("material", name)), k)
        layers.append(Layer(name, dx, dy, thick, mat, (float(off[0]), float(off[1])), zb))
        z = zb + thick

    gap = data.get("gap_fill_k_w_mk", 3.0)
    try:
        gap = float(gap)
    except (TypeError, ValueError):
        raise ctx("gap_fill_k_w_mk: expected a number") from None

    warnings = []
    bnds = data.get("boundaries", {})
    if not isinstance(bnds, dict):
        raise ctx("'boundaries' must be an object")
    bcs = {}
    for side in ("top", "bottom"):
        raw = bnds.get(side)
        if raw is None:
            warnings.append(f"{side} boundary missing: defaulted to adiabatic (htc=0)")
            raw = {"htc_w_m2k": 0.0}
        try:
            bcs[side] = BoundaryCondition(
                side, float(raw.get("htc_w_m2k", 0.0)), float(raw.get("ambient_c", 25.0))
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise ctx(f"boundaries.{side}: {exc}") from None

    stack = PackageStack(
        layers=tuple(layers),
        gap_fill=Material(str(data.get("gap_fill_name", "mold")), gap),
        top=bcs["top"],
        bottom=bcs["bottom"],
        name=str(data.get("name", "")),
        warnings=tuple(warnings),
        assumptions=tuple(str(a) for a in data.get("assumptions", [])),
    )
    problems = validate(stack)
    if problems:
        raise StackError(f"{src}: invalid stack: " + "; ".join(problems))
    return stack


def load_stack(path) -> PackageStack:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StackError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StackError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return _stack_from_dict(data, str(path))


def stack_to_dict(stack: PackageStack) -> dict:
    out = {
        "name": stack.name,
        "layers": [
            {
                "name": lay.name,
                "material": lay.material.name,
                "dx_mm": lay.dx,
                "dy_mm": lay.dy,
                "thickness_um": lay.thickness,
                "k_w_mk": lay.k,
                "offset_mm": [lay.offset[0], lay.offset[1]],
                "z_um": lay.z,
            }
            for lay in stack.layers
        ],
        "gap_fill_name": stack.gap_fill.name,
        "gap_fill_k_w_mk": stack.gap_fill.k,
        "boundaries": {
            side: {"htc_w_m2k": bc.htc, "ambient_c": bc.ambient}
            for side, bc in (("top", stack.top), ("bottom", stack.bottom))
        },
    }
    if stack.assumptions:
        out["assumptions"] = list(stack.assumptions)
    return out


def save_stack(stack: PackageStack, path) -> None:
    Path(path).write_text(json.dumps(stack_to_dict(stack), indent=2) + "\n")


def stack_from_layers(
    rows: Sequence[tuple],
    *,
    top_htc: float,
    bottom_htc: float = 0.0,
    ambient: float = 25.0,
    gap_k: float = 3.0,
    name: str = "",
    center: bool = True,
) -> PackageStack:
    """Build a stack by piling ``(name, dx, dy, thickness, k)`` rows upward.

    Every layer is centred on the widest one when ``center`` is set.
    """
    wx = max(r[1] for r in rows)
    wy = max(r[2] for r in rows)
    layers = []
    z = 0.0
    for name_, dx, dy, t, k in rows:
        off = ((wx - dx) / 2, (wy - dy) / 2) if center else (0.0, 0.0)
        layers.append(Layer(name_, dx, dy, t, Material(name_, k), off, z))
        z += t
    return PackageStack(
        tuple(layers),
        Material("mold", gap_k),
        BoundaryCondition("top", top_htc, ambient),
        BoundaryCondition("bottom", bottom_htc, ambient),
        name=name,
    )


# --------------------------------------------------------------------------
# Presets

class Preset(str, enum.Enum):
    SIP_25D = "SIP_25D"
    STACK1_FSPDN = "STACK1_FSPDN"
    STACK2_BSPDN = "STACK2_BSPDN"


TOP_HTC = 2500.0
BOTTOM_HTC = 200.0
AMBIENT_C = 25.0
MOLD_K = 3.0
CHIPLET_GAP_MM = 0.1

# (name, dx mm, dy mm, thickness um, k) bottom to top, below the dies.
TABLE1_BELOW = [
    ("pcb", 100.0, 100.0, 800.0, 5.0),
    ("solder_balls", 50.0, 50.0, 100.0, 8.0),
    ("substrate", 50.0, 50.0, 300.0, 0.6),
    ("ubumps", 32.9, 22.6, 100.0, 6.0),
    ("interposer", 32.9, 22.6, 50.0, 140.0),
    ("interposer_beol", 32.9, 22.6, 5.0, 1.2),
]
TABLE1_BUMPS = [
    ("c_ubumps", 13.6, 19.6, 10.0, 3.5),
    ("io_ubumps", 19.2, 22.6, 10.0, 3.5),
]
TABLE1_ABOVE = [
    ("tim", 32.9, 22.6, 250.0, 30.0),
    ("heat_spreader", 40.0, 40.0, 5000.0, 400.0),
    ("heat_sink", 100.0, 100.0, 3000.0, 400.0),
]

SI_K = 140.0
THIN_SI_K = 135.0
BSPDN_K = 71.0

# Computing-chiplet internals, bottom to top: (name, thickness um, k).
# Only the 5 um thin Si (135) and BSPDN (71) values come from the
# published text; the rest are representative compact-model defaults.
FSPDN_COLUMN = [
    ("logic_si_thin", 5.0, THIN_SI_K),
    ("logic_feol", 1.0, 7.9),
    ("beol_mxy_logic", 3.0, 1.5),
    ("beol_mz_logic", 2.0, 2.5),
    ("f2f_bond", 1.0, 1.4),
    ("beol_mxy_mem", 3.0, 1.5),
    ("mem_feol", 1.0, 7.9),
    ("mem_si", 50.0, SI_K),
]
BSPDN_COLUMN = [
    ("bspdn", 1.0, BSPDN_K),
    ("logic_feol", 1.0, 7.9),
    ("beol_mxy_logic", 3.0, 1.5),
    ("f2f_bond", 1.0, 1.4),
    ("beol_mxy_mem", 3.0, 1.5),
    ("mem_feol", 1.0, 7.9),
    ("mem_si", 50.0, SI_K),
]

PRESET_ASSUMPTIONS = (
    "memory-die silicon 50 um @ 140 W/mK (default, not a published value)",
    "FEOL layers 1 um @ 7.9 W/mK (default)",
    "BEOL_MXY 3 um @ 1.5 W/mK (default)",
    "BEOL_MZ 2 um @ 2.5 W/mK (default)",
    "F2F hybrid bond 1 um @ 1.4 W/mK (default)",
    "BSPDN layer 1 um thick (default); k=71 W/mK published",
    "IO die modelled as bulk silicon @ 140 W/mK, height matched to the computing chiplet",
    "SIP_25D lumps the computing chiplet into one 66 um silicon die",
    "lateral package faces adiabatic",
)

COMPUTE_DIE_MM = (13.6, 19.6)
IO_DIE_MM = (19.2, 22.6)


def _carrier_origin() -> tuple[float, float]:
    pcb = TABLE1_BELOW[0]
    ip = TABLE1_BELOW[4]
    return ((pcb[1] - ip[1]) / 2, (pcb[2] - ip[2]) / 2)


def compute_die_rect() -> tuple[float, float, float, float]:
    """Footprint of the computing chiplet in package coordinates, mm."""
    cx, cy = _carrier_origin()
    ip_dy = TABLE1_BELOW[4][2]
    y0 = cy + (ip_dy - COMPUTE_DIE_MM[1]) / 2
    return (cx, y0, cx + COMPUTE_DIE_MM[0], y0 + COMPUTE_DIE_MM[1])


def build_preset(preset) -> PackageStack:
    preset = Preset(preset)
    W, H = TABLE1_BELOW[0][1], TABLE1_BELOW[0][2]

    def centred(dx, dy):
        return ((W - dx) / 2, (H - dy) / 2)

    layers: list[Layer] = []
    z = 0.0
    for name, dx, dy, t, k in TABLE1_BELOW:
        layers.append(Layer(name, dx, dy, t, Material(name, k), centred(dx, dy), z))
        z += t

    cx0, cy0, cx1, cy1 = compute_die_rect()
    io_off = (cx1 + CHIPLET_GAP_MM, _carrier_origin()[1])
    c_off = (cx0, cy0)
    z_bumps = z
    for (name, dx, dy, t, k), off in zip(TABLE1_BUMPS, (c_off, io_off)):
        layers.append(Layer(name, dx, dy, t, Material(name, k), off, z_bumps))
    z = z_bumps + TABLE1_BUMPS[0][3]

    if preset is Preset.SIP_25D:
        column = [("compute_die", sum(t for _, t, _ in FSPDN_COLUMN), SI_K)]
    elif preset is Preset.STACK1_FSPDN:
        column = FSPDN_COLUMN
    else:
        column = BSPDN_COLUMN
    silicon = Material("silicon", SI_K)
    z_die = z
    for name, t, k in column:
        mat = silicon if k == SI_K else Material(name, k)
        layers.append(Layer(name, COMPUTE_DIE_MM[0], COMPUTE_DIE_MM[1], t, mat, c_off, z))
        z += t
    die_h = z - z_die
    layers.append(Layer("io_die", IO_DIE_MM[0], IO_DIE_MM[1], die_h, silicon, io_off, z_die))

    for name, dx, dy, t, k in TABLE1_ABOVE:
        off = (_carrier_origin()[0], _carrier_origin()[1]) if name == "tim" else centred(dx, dy)
        layers.append(Layer(name, dx, dy, t, Material(name, k), off, z))
        z += t

    return PackageStack(
        layers=tuple(layers),
        gap_fill=Material("mold", MOLD_K),
        top=BoundaryCondition("top", TOP_HTC, AMBIENT_C),
        bottom=BoundaryCondition("bottom", BOTTOM_HTC, AMBIENT_C),
        name=preset.value,
        assumptions=PRESET_ASSUMPTIONS,
    )


def with_boundaries(stack: PackageStack, *, top=None, bottom=None, ambient=None) -> PackageStack:
    """Copy of ``stack`` with replaced htc values and/or ambient."""
    t, b = stack.top, stack.bottom
    if top is not None:
        t = replace(t, htc=float(top))
    if bottom is not None:
        b = replace(b, htc=float(bottom))
    if ambient is not None:
        t = replace(t, ambient=float(ambient))
        b = replace(b, ambient=float(ambient))
    return replace(stack, top=t, bottom=b)


def layer_diff(a: PackageStack, b: PackageStack) -> tuple[list[str], list[str]]:
    """Names present only in ``a`` and only in ``b``."""
    an, bn = set(a.names), set(b.names)
    return sorted(an - bn), sorted(bn - an)
