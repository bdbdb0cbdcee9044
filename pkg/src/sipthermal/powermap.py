"""2D power maps attached to an active layer, their generators and resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize

DEFAULT_LAYER = "logic_feol"
CONSERVATION_RTOL = 1e-9


class PowerMapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PowerMap:
    """Per-cell power in W on an ``ny x nx`` grid (row index = y).

    ``pitch`` is the cell size in um and ``origin`` the lower-left corner
    of the map on the package plane in mm.
    """

    cells: np.ndarray
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)
    target_layer: str = DEFAULT_LAYER

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise PowerMapError(f"power map must be a non-empty 2D grid, got shape {cells.shape}")
        if not np.all(np.isfinite(cells)):
            raise PowerMapError("power map contains non-finite values")
        if np.any(cells < 0):
            j, i = np.argwhere(cells < 0)[0]
            raise PowerMapError(f"negative cell power at row {j}, col {i}")
        if not (math.isfinite(self.pitch) and self.pitch > 0):
            raise PowerMapError(f"pitch must be positive, got {self.pitch}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def ny(self) -> int:
        return self.cells.shape[0]

    @property
    def nx(self) -> int:
        return self.cells.shape[1]

    @property
    def size_mm(self) -> tuple[float, float]:
        return (self.nx * self.pitch * 1e-3, self.ny * self.pitch * 1e-3)

    @property
    def rect(self) -> tuple[float, float, float, float]:
        w, h = self.size_mm
        return (self.origin[0], self.origin[1], self.origin[0] + w, self.origin[1] + h)

    def __eq__(self, other):
        if not isinstance(other, PowerMap):
            return NotImplemented
        return (
            self.pitch == other.pitch
            and self.origin == other.origin
            and self.target_layer == other.target_layer
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )

    def scaled(self, factor: float) -> "PowerMap":
        return PowerMap(self.cells * factor, self.pitch, self.origin, self.target_layer)

    def moved(self, origin=None, layer=None) -> "PowerMap":
        return PowerMap(
            self.cells,
            self.pitch,
            self.origin if origin is None else origin,
            self.target_layer if layer is None else layer,
        )


def total_power(pmap: PowerMap) -> float:
    return float(math.fsum(pmap.cells.ravel()))


def _check_dims(nx, ny):
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise PowerMapError(f"grid dimensions must be positive integers, got nx={nx}, ny={ny}")


def _check_total(total):
    if not (math.isfinite(total) and total >= 0):
        raise PowerMapError(f"total power must be finite and >= 0, got {total}")


def gen_uniform(total, nx, ny, pitch, origin=(0.0, 0.0), layer=DEFAULT_LAYER) -> PowerMap:
    _check_dims(nx, ny)
    _check_total(total)
    cells = np.full((int(ny), int(nx)), total / (nx * ny))
    return PowerMap(cells, pitch, origin, layer)


def cone_kernel(dist: np.ndarray, radius: float) -> np.ndarray:
    """Radially linear kernel, 1 at the centre and 0 beyond ``radius``."""
    return np.clip(1.0 - dist / radius, 0.0, None)


def _fit_radius(dist: np.ndarray, peak_ratio: float, kernel) -> float:
    # mean(kernel) grows monotonically with the radius; peak is always 1.
    target = 1.0 / peak_ratio
    dmax = float(dist.max())
    mean_d = float(dist.mean())
    if dmax == 0.0:
        return 1.0
    # Once radius >= dmax the cone never truncates and mean = 1 - mean_d / r.
    r_closed = mean_d / (1.0 - target)
    if r_closed >= dmax:
        return r_closed
    f = lambda r: float(kernel(dist, r).mean()) - target
    lo = 1e-6
    if f(lo) > 0:
        return lo
    return optimize.brentq(f, lo, dmax, xtol=1e-12, rtol=1e-14)


def gen_clustered(
    total,
    nx,
    ny,
    pitch,
    block=25,
    peak_ratio=4.0,
    seed=0,
    origin=(0.0, 0.0),
    layer=DEFAULT_LAYER,
    kernel=cone_kernel,
) -> PowerMap:
    """Grid of ``block x block`` sub-blocks, each one centre-weighted blob.

    Every sub-block carries the same share of ``total``.  Blob centres are
    drawn from ``numpy.random.default_rng(seed)`` in row-major block order,
    and the kernel radius is fitted per block so that the block's peak cell
    is ``peak_ratio`` times its mean cell.
    """
    _check_dims(nx, ny)
    _check_total(total)
    if nx % block or ny % block:
        raise PowerMapError(f"nx={nx}, ny={ny} not divisible by block={block}")
    if not (peak_ratio >= 1):
        raise PowerMapError(f"peak_ratio must be >= 1, got {peak_ratio}")
    if peak_ratio > block * block:
        raise PowerMapError(f"peak_ratio {peak_ratio} exceeds cells per block ({block * block})")
    if peak_ratio == 1:
        return gen_uniform(total, nx, ny, pitch, origin, layer)

    bx, by = nx // block, ny // block
    share = total / (bx * by)
    rng = np.random.default_rng(seed)
    centres = rng.integers(0, block, size=(by, bx, 2))
    jj, ii = np.mgrid[0:block, 0:block]
    cells = np.empty((ny, nx))
    for b_j in range(by):
        for b_i in range(bx):
            cj, ci = centres[b_j, b_i]
            dist = np.hypot(jj - cj, ii - ci)
            w = kernel(dist, _fit_radius(dist, peak_ratio, kernel))
            cells[b_j * block:(b_j + 1) * block, b_i * block:(b_i + 1) * block] = w * (share / w.sum())
    return PowerMap(cells, pitch, origin, layer)


def _centred_span(n: int, frac: float) -> int:
    # nearest span with the parity of n, so the hot square is exactly centred
    target = n * frac
    return min(range(n % 2 or 2, n + 1, 2), key=lambda s: (abs(s - target), s))


def gen_center_focused(
    total,
    nx,
    ny,
    pitch,
    concentration=0.25,
    background=0.0,
    origin=(0.0, 0.0),
    layer=DEFAULT_LAYER,
) -> PowerMap:
    """All power (less a uniform ``background`` fraction) in a central square.

    The square covers ``concentration`` of the map area, rounded to whole
    cells and kept symmetric about the map centre.
    """
    _check_dims(nx, ny)
    _check_total(total)
    if not (0 < concentration <= 1):
        raise PowerMapError(f"concentration must lie in (0, 1], got {concentration}")
    if not (0 <= background < 1):
        raise PowerMapError(f"background must lie in [0, 1), got {background}")
    side = math.sqrt(concentration)
    sx, sy = _centred_span(nx, side), _centred_span(ny, side)
    x0, y0 = (nx - sx) // 2, (ny - sy) // 2
    hot = total * (1.0 - background) if background else total
    cells = np.full((ny, nx), total * background / (nx * ny) if background else 0.0)
    cells[y0:y0 + sy, x0:x0 + sx] += hot / (sx * sy)
    return PowerMap(cells, pitch, origin, layer)


def hot_fraction(pmap: PowerMap) -> float:
    """Fraction of cells above the map's minimum value (1.0 for flat maps)."""
    c = pmap.cells
    if c.max() == c.min():
        return 1.0
    return float(np.count_nonzero(c > c.min()) / c.size)


# --------------------------------------------------------------------------
# CSV

def save_power_map(pmap: PowerMap, path) -> None:
    lines = [
        f"# pitch_um={pmap.pitch!r}",
        f"# origin_mm={pmap.origin[0]!r},{pmap.origin[1]!r}",
        f"# layer={pmap.target_layer}",
    ]
    lines += [",".join(f"{v:.17g}" for v in row) for row in pmap.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def load_power_map(path, stack=None) -> PowerMap:
    """Read a power-map CSV; with ``stack`` also check the layer footprint."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PowerMapError(f"{path}: {exc}") from exc
    meta = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        try:
            rows.append([float(v) for v in s.split(",")])
        except ValueError:
            raise PowerMapError(f"{path}:{lineno}: non-numeric cell value") from None
    if not rows:
        raise PowerMapError(f"{path}: no data rows")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise PowerMapError(f"{path}: row {r} has {len(row)} values, expected {width}")
    cells = np.array(rows)
    if np.any(cells < 0):
        j, i = np.argwhere(cells < 0)[0]
        raise PowerMapError(f"{path}: negative cell power at row {j}, col {i}")
    try:
        pitch = float(meta["pitch_um"])
    except KeyError:
        raise PowerMapError(f"{path}: missing '# pitch_um=' header") from None
    except ValueError:
        raise PowerMapError(f"{path}: bad pitch_um header") from None
    origin = (0.0, 0.0)
    if "origin_mm" in meta:
        try:
            ox, oy = (float(v) for v in meta["origin_mm"].split(","))
        except ValueError:
            raise PowerMapError(f"{path}: bad origin_mm header") from None
        origin = (ox, oy)
    pmap = PowerMap(cells, pitch, origin, meta.get("layer", DEFAULT_LAYER))
    if stack is not None:
        check_fits(pmap, stack)
    return pmap


def check_fits(pmap: PowerMap, stack) -> None:
    try:
        lay = stack.layer(pmap.target_layer)
    except KeyError:
        raise PowerMapError(f"power map targets unknown layer {pmap.target_layer!r}") from None
    x0, y0, x1, y1 = pmap.rect
    lx0, ly0, lx1, ly1 = lay.rect
    tol = 1e-9 * max(1.0, lx1 - lx0, ly1 - ly0)
    if x0 < lx0 - tol or y0 < ly0 - tol or x1 > lx1 + tol or y1 > ly1 + tol:
        raise PowerMapError(
            f"power map footprint {pmap.rect} overflows layer {lay.name!r} footprint {lay.rect}"
        )


# --------------------------------------------------------------------------
# Resampling

def overlap_matrix(src_edges: np.ndarray, dst_edges: np.ndarray) -> np.ndarray:
    """W[i, j] = fraction of source cell j that falls inside target cell i."""
    lo = np.maximum(dst_edges[:-1, None], src_edges[None, :-1])
    hi = np.minimum(dst_edges[1:, None], src_edges[None, 1:])
    return np.clip(hi - lo, 0.0, None) / np.diff(src_edges)[None, :]


def _cell_count(length, pitch, fit):
    n = length / pitch
    rn = round(n)
    if rn >= 1 and abs(n - rn) <= 1e-9 * max(1.0, n):
        return rn
    if fit == "pad":
        return math.ceil(n)
    if fit == "crop":
        return max(1, math.floor(n))
    raise PowerMapError(
        f"footprint {length} um is not a whole number of {pitch} um cells; "
        "pass fit='pad' or fit='crop'"
    )


def _renormalise(cells, target):
    got = math.fsum(cells.ravel())
    if got > 0 and abs(got - target) > 1e-12 * target:
        cells = cells * (target / got)
    return cells


def resample(pmap: PowerMap, new_pitch, method="area_weighted", fit="error") -> PowerMap:
    """Re-grid ``pmap`` at ``new_pitch`` over the same footprint.

    ``fit`` decides what happens when the footprint is not a whole number
    of new cells: ``'error'`` (default), ``'pad'`` (grow the footprint with
    zero-power area) or ``'crop'`` (shrink it; the cut power is folded back
    by the renormalisation so the total is kept).
    """
    if not (new_pitch > 0):
        raise PowerMapError(f"new_pitch must be positive, got {new_pitch}")
    if method not in ("area_weighted", "bilinear_filtered"):
        raise PowerMapError(f"unknown resample method {method!r}")
    total = total_power(pmap)
    p = pmap.pitch
    nx = _cell_count(pmap.nx * p, new_pitch, fit)
    ny = _cell_count(pmap.ny * p, new_pitch, fit)

    if method == "area_weighted":
        wx = overlap_matrix(np.arange(pmap.nx + 1) * p, np.arange(nx + 1) * new_pitch)
        wy = overlap_matrix(np.arange(pmap.ny + 1) * p, np.arange(ny + 1) * new_pitch)
        cells = wy @ pmap.cells @ wx.T
    else:
        density = pmap.cells / (p * p)
        # new cell centres expressed in source-cell index coordinates
        cx = (np.arange(nx) + 0.5) * new_pitch / p - 0.5
        cy = (np.arange(ny) + 0.5) * new_pitch / p - 0.5
        gy, gx = np.meshgrid(cy, cx, indexing="ij")
        dens = ndimage.map_coordinates(density, [gy, gx], order=1, mode="nearest")
        smooth = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0
        dens = ndimage.convolve(dens, smooth, mode="nearest")
        cells = np.clip(dens, 0.0, None) * (new_pitch * new_pitch)
        # crop/pad leaves the sampled area different from the source one
    cells = _renormalise(cells, total) if total > 0 else np.zeros_like(cells)
    return PowerMap(cells, new_pitch, pmap.origin, pmap.target_layer)
