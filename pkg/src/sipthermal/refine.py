"""Global-local refinement: coarse package solve, cut-face extraction, fine window solve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .powermap import PowerMap, overlap_matrix
from .solver import (
    FACES,
    Mesh,
    TemperatureField,
    assemble,
    attach_power,
    discretize,
    solve,
)
from .stackmodel import PackageStack

LOCAL_Z_POLICY = "max_aspect(2)"
MARGIN_CELLS = 2


class RefineError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Fine-pitch sub-domain.

    ``rect`` is the solved region and ``core`` the reported one (both
    (x0, y0, x1, y1) in mm); ``layers`` is the included layer span, or
    None for the full stack height.
    """

    rect: tuple[float, float, float, float]
    pitch: float
    core: tuple[float, float, float, float] | None = None
    layers: tuple[str, ...] | None = None
    z_policy: str = LOCAL_Z_POLICY

    def __post_init__(self):
        if self.core is None:
            object.__setattr__(self, "core", self.rect)

    def discretize(self, stack: PackageStack) -> Mesh:
        return discretize(stack, self.pitch, self.z_policy, region=self.rect, layers=self.layers)


@dataclass
class LocalBCs:
    """Fixed temperatures (degC) on the cut faces of a window mesh."""

    faces: dict
    mesh: Mesh

    def __getitem__(self, face):
        return self.faces[face]

    @property
    def t_min(self) -> float:
        return min(float(np.min(v)) for v in self.faces.values()) if self.faces else math.nan

    @property
    def t_max(self) -> float:
        return max(float(np.max(v)) for v in self.faces.values()) if self.faces else math.nan


def _snap(v, step, how):
    q = v / step
    r = round(q)
    if abs(q - r) < 1e-9:
        return r * step
    return (math.floor(q) if how == "down" else math.ceil(q)) * step


def _peak_index(plane: np.ndarray) -> tuple[int, int]:
    """Index (j, i) of the maximum; ties go to the lowest x, then y."""
    vmax = np.nanmax(plane)
    js, is_ = np.nonzero(plane == vmax)
    order = np.lexsort((js, is_))
    return int(js[order[0]]), int(is_[order[0]])


def find_hottest_window(
    global_field: TemperatureField,
    core_size,
    layer: str,
    fine_pitch: float = 5.0,
    margin_cells: int = MARGIN_CELLS,
    layers=None,
    z_policy: str = LOCAL_Z_POLICY,
) -> Window:
    """Core-sized window centred on the hottest voxel of ``layer``.

    The core is clamped inside the layer footprint and snapped to the fine
    grid; the solved rectangle adds ``margin_cells`` coarse cells on every
    side, clipped to the package footprint.
    """
    mesh = global_field.mesh
    w, h = (float(v) for v in core_size)
    lay = mesh.stack.layer(layer)
    lx0, ly0, lx1, ly1 = lay.rect
    if w > lx1 - lx0 + 1e-9 or h > ly1 - ly0 + 1e-9:
        raise RefineError(f"core size {w}x{h} mm exceeds layer {layer!r} footprint")
    plane = global_field.layer_slice(layer)
    j, i = _peak_index(plane)
    cx, cy = mesh.x_centers[i], mesh.y_centers[j]
    step = fine_pitch * 1e-3
    x0 = min(max(cx - w / 2, lx0), lx1 - w)
    y0 = min(max(cy - h / 2, ly0), ly1 - h)
    x0 = _snap(x0, step, "down") if _snap(x0, step, "down") >= lx0 - 1e-9 else _snap(x0, step, "up")
    y0 = _snap(y0, step, "down") if _snap(y0, step, "down") >= ly0 - 1e-9 else _snap(y0, step, "up")
    core = (x0, y0, x0 + w, y0 + h)
    return window_around(mesh.stack, core, fine_pitch, mesh.pitch, margin_cells, layers, z_policy)


def window_around(stack, core, fine_pitch, coarse_pitch, margin_cells=MARGIN_CELLS,
                  layers=None, z_policy=LOCAL_Z_POLICY) -> Window:
    """Pad ``core`` by ``margin_cells`` coarse cells and clip to the package."""
    fx0, fy0, fx1, fy1 = stack.footprint
    pad = margin_cells * coarse_pitch * 1e-3
    fine = fine_pitch * 1e-3
    rect = (
        max(fx0, core[0] - pad),
        max(fy0, core[1] - pad),
        min(fx1, core[2] + pad),
        min(fy1, core[3] + pad),
    )
    for a, b in ((rect[0], rect[2]), (rect[1], rect[3])):
        n = (b - a) / fine
        if abs(n - round(n)) > 1e-6:
            raise RefineError(f"window extent {b - a:g} mm is not a multiple of the fine pitch")
    if fine_pitch > coarse_pitch:
        raise RefineError("fine pitch must not exceed the global pitch")
    return Window(rect, fine_pitch, tuple(core), None if layers is None else tuple(layers), z_policy)


def hottest_core(global_field: TemperatureField, cores, layer: str) -> int:
    """Index of the core rectangle holding the highest ``layer`` temperature."""
    mesh = global_field.mesh
    plane = global_field.layer_slice(layer)
    xc, yc = mesh.x_centers, mesh.y_centers
    best, best_t = -1, -math.inf
    for n, (x0, y0, x1, y1) in enumerate(cores):
        mi = (xc >= x0) & (xc <= x1)
        mj = (yc >= y0) & (yc <= y1)
        sub = plane[np.ix_(mj, mi)]
        if sub.size == 0 or np.all(np.isnan(sub)):
            continue
        t = float(np.nanmax(sub))
        if t > best_t:
            best, best_t = n, t
    if best < 0:
        raise RefineError("no core overlaps the global mesh")
    return best


def _filled(values: np.ndarray) -> np.ndarray:
    bad = np.isnan(values)
    if not bad.any():
        return values
    idx = ndimage.distance_transform_edt(bad, return_distances=False, return_indices=True)
    return values[tuple(idx)]


def _interp(global_field: TemperatureField):
    gm = global_field.mesh
    vals = _filled(global_field.values)
    axes = [gm.z_centers, gm.y_centers, gm.x_centers]
    for n, a in enumerate(axes):
        if len(a) == 1:
            # single cell along this axis: constant extension
            axes[n] = np.array([a[0] - 1.0, a[0] + 1.0])
            vals = np.repeat(vals, 2, axis=n)
    interp = RegularGridInterpolator(axes, vals, method="linear")

    def at(z, y, x):
        pts = [np.clip(c, a[0], a[-1]) for c, a in zip(np.broadcast_arrays(z, y, x), axes)]
        return interp(np.stack(pts, axis=-1))

    return at


def extract_boundary(global_field: TemperatureField, window: Window, local_mesh: Mesh | None = None) -> LocalBCs:
    """Interpolate the global field onto the cut faces of the window mesh."""
    lm = window.discretize(global_field.mesh.stack) if local_mesh is None else local_mesh
    at = _interp(global_field)
    lo, hi = float(np.nanmin(global_field.values)), float(np.nanmax(global_field.values))
    x0, y0, x1, y1 = lm.region
    zc, yc, xc = lm.z_centers, lm.y_centers, lm.x_centers
    Z, Y = np.meshgrid(zc, yc, indexing="ij")
    Zx, X = np.meshgrid(zc, xc, indexing="ij")
    Yt, Xt = np.meshgrid(yc, xc, indexing="ij")
    coords = {
        "west": (Z, Y, np.full_like(Z, x0)),
        "east": (Z, Y, np.full_like(Z, x1)),
        "south": (Zx, np.full_like(Zx, y0), X),
        "north": (Zx, np.full_like(Zx, y1), X),
        "bottom": (np.full_like(Yt, lm.z_edges[0]), Yt, Xt),
        "top": (np.full_like(Yt, lm.z_edges[-1]), Yt, Xt),
    }
    faces = {}
    for face in FACES:
        if lm.cut[face]:
            faces[face] = np.clip(at(*coords[face]), lo, hi)
    return LocalBCs(faces, lm)


def remap_power(global_mesh: Mesh, local_mesh: Mesh) -> np.ndarray:
    """Conservatively carry the global voxel power that falls inside the window."""
    wx = overlap_matrix(global_mesh.x_edges, local_mesh.x_edges)
    wy = overlap_matrix(global_mesh.y_edges, local_mesh.y_edges)
    wz = overlap_matrix(global_mesh.z_edges, local_mesh.z_edges)
    out = np.zeros(local_mesh.shape)
    for kz in np.nonzero(global_mesh.power.reshape(global_mesh.nz, -1).any(axis=1))[0]:
        frac = wz[:, kz]
        if not frac.any():
            continue
        plane = wy @ global_mesh.power[kz] @ wx.T
        out += frac[:, None, None] * plane[None, :, :]
    return out


@dataclass
class LocalResult:
    field: TemperatureField
    window: Window
    bcs: LocalBCs
    global_peak: float               # degC, global field inside the core
    local_peak: float                # degC, local field inside the core
    layer: str | None = None
    extra: dict = field(default_factory=dict)


def core_peak(fld: TemperatureField, core, layer=None) -> float:
    """Max temperature of voxels overlapping ``core`` with positive area
    (optionally restricted to one layer)."""
    m = fld.mesh
    eps = 1e-9
    mi = (m.x_edges[1:] > core[0] + eps) & (m.x_edges[:-1] < core[2] - eps)
    mj = (m.y_edges[1:] > core[1] + eps) & (m.y_edges[:-1] < core[3] - eps)
    vals = fld.values[:, mj][:, :, mi]
    if layer is not None:
        mask = m.layer_mask(layer)[:, mj][:, :, mi]
        vals = np.where(mask, vals, np.nan)
    return float(np.nanmax(vals))


def solve_local(
    stack: PackageStack,
    window: Window,
    fine_power,
    bcs: LocalBCs | None,
    global_field: TemperatureField | None = None,
    tol: float = 1e-8,
    layer: str | None = None,
    **solve_kw,
) -> LocalResult:
    """Fine solve on the window with fixed-temperature cut faces.

    Power from ``global_field``'s mesh is carried into the window and then
    replaced by each fine map under that map's footprint.
    """
    lm = bcs.mesh if bcs is not None else window.discretize(stack)
    maps = [] if fine_power is None else ([fine_power] if isinstance(fine_power, PowerMap) else list(fine_power))
    if global_field is not None:
        lm = lm.with_power(remap_power(global_field.mesh, lm))
    for pm in maps:
        x0, y0, x1, y1 = pm.rect
        r = window.rect
        if x0 < r[0] - 1e-9 or y0 < r[1] - 1e-9 or x1 > r[2] + 1e-9 or y1 > r[3] + 1e-9:
            raise RefineError(f"fine power map {pm.rect} is not inside the window {r}")
        lm = attach_power(lm, pm, replace_region=True)
    if bcs is None and any(lm.cut.values()):
        raise RefineError("window has cut faces but no boundary temperatures were given")
    system = assemble(lm, dirichlet=None if bcs is None else bcs.faces)
    fld = solve(system, tol=tol, **solve_kw)
    gpeak = core_peak(global_field, window.core, layer) if global_field is not None else math.nan
    return LocalResult(fld, window, bcs, gpeak, core_peak(fld, window.core, layer), layer)
