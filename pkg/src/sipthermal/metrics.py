"""Peak / delta / gradient metrics and heatmap + CSV exports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .solver import TemperatureField, energy_balance


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class Peak:
    t_c: float
    x_mm: float
    y_mm: float
    z_um: float
    layer: str
    index: tuple[int, int, int]

    def as_dict(self):
        d = asdict(self)
        d["index"] = list(self.index)
        return d


def _layer_name(mesh, kji):
    lid = int(mesh.layer_id[kji])
    return mesh.layer_names[lid] if lid >= 0 else mesh.stack.gap_fill.name


def peak(fld: TemperatureField, layer: str | None = None) -> Peak:
    """Hottest voxel overall or of one layer; ties go to the lowest linear index."""
    mesh = fld.mesh
    vals = fld.values
    if layer is not None:
        try:
            mask = mesh.layer_mask(layer)
        except KeyError:
            raise MetricsError(f"unknown layer {layer!r}") from None
        if not mask.any():
            raise MetricsError(f"layer {layer!r} has no voxels in this mesh")
        vals = np.where(mask, vals, np.nan)
    flat = int(np.nanargmax(vals))
    kji = np.unravel_index(flat, vals.shape)
    k, j, i = (int(v) for v in kji)
    return Peak(
        float(vals[kji]),
        float(mesh.x_centers[i]),
        float(mesh.y_centers[j]),
        float(mesh.z_centers[k]),
        _layer_name(mesh, kji),
        (k, j, i),
    )


def layer_mean(fld: TemperatureField, layer: str) -> float:
    v = fld.layer_values(layer)
    return float(np.mean(v)) if v.size else math.nan


def max_lateral_gradient(fld: TemperatureField, layer: str) -> float:
    """Largest in-plane |grad T| on the layer's top slab, K/mm.

    Central differences inside, one-sided at the edges of the layer.
    """
    plane = fld.layer_slice(layer)
    ok = ~np.isnan(plane)
    if not ok.any():
        return math.nan
    js, is_ = np.nonzero(ok)
    sub = plane[js.min():js.max() + 1, is_.min():is_.max() + 1]
    h = fld.mesh.pitch * 1e-3
    if sub.shape[0] < 2 and sub.shape[1] < 2:
        return 0.0
    gy = np.gradient(sub, h, axis=0) if sub.shape[0] > 1 else np.zeros_like(sub)
    gx = np.gradient(sub, h, axis=1) if sub.shape[1] > 1 else np.zeros_like(sub)
    g = np.hypot(gx, gy)
    return float(np.nanmax(g)) if np.any(~np.isnan(g)) else math.nan


def same_plane(a: TemperatureField, b: TemperatureField) -> bool:
    ma, mb = a.mesh, b.mesh
    return (
        ma.x_edges.shape == mb.x_edges.shape
        and ma.y_edges.shape == mb.y_edges.shape
        and np.allclose(ma.x_edges, mb.x_edges, rtol=0, atol=1e-9)
        and np.allclose(ma.y_edges, mb.y_edges, rtol=0, atol=1e-9)
    )


def delta_report(a: TemperatureField, b: TemperatureField, layer: str | None = None) -> dict:
    """``a`` minus ``b``: peak delta, mean delta on ``layer`` and the sign.

    The two fields may come from different stacks but must share the
    in-plane grid; temperatures are never resampled.
    """
    if not same_plane(a, b):
        raise MetricsError("fields are on different in-plane grids; refusing to resample temperatures")
    pa, pb = peak(a, layer), peak(b, layer)
    out = {
        "peak_a_c": pa.t_c,
        "peak_b_c": pb.t_c,
        "peak_delta_k": pa.t_c - pb.t_c,
    }
    if layer is not None:
        ma, mb = layer_mean(a, layer), layer_mean(b, layer)
        out.update(mean_a_c=ma, mean_b_c=mb, mean_delta_k=ma - mb)
    d = out["peak_delta_k"]
    out["sign"] = "positive" if d > 0 else "negative" if d < 0 else "zero"
    return out


def field_summary(fld: TemperatureField, layer: str, core=None) -> dict:
    """Report fragment for one solved field."""
    pk = peak(fld)
    pl = peak(fld, layer)
    eb = energy_balance(fld)
    out = {
        "peak": pk.as_dict(),
        "layer_peak": pl.as_dict(),
        "layer": layer,
        "layer_mean_c": layer_mean(fld, layer),
        "max_lateral_gradient_k_per_mm": max_lateral_gradient(fld, layer),
        "energy": {
            "p_in_w": eb.p_in,
            "q_top_w": eb.q_top,
            "q_bottom_w": eb.q_bottom,
            "q_cut_w": eb.q_cut,
            "top_fraction": eb.top_fraction,
            "balance_residual": eb.residual,
        },
        "solver": {
            "iterations": int(fld.iterations),
            "relative_residual": float(fld.residual),
            "preconditioner": fld.preconditioner,
            "voxels": int(fld.mesh.n_active),
            "pitch_um": fld.mesh.pitch,
        },
    }
    if core is not None:
        from .refine import core_peak

        out["core_peak_c"] = core_peak(fld, core, layer)
    return out


# --------------------------------------------------------------------------
# Exports

def colormap(t: np.ndarray) -> np.ndarray:
    """Linear blue (0) to red (1) ramp, uint8 RGB; NaN maps to black."""
    t = np.asarray(t, dtype=float)
    rgb = np.zeros(t.shape + (3,), dtype=np.uint8)
    ok = ~np.isnan(t)
    tc = np.clip(t[ok], 0.0, 1.0)
    rgb[ok, 0] = np.round(255 * tc).astype(np.uint8)
    rgb[ok, 2] = np.round(255 * (1.0 - tc)).astype(np.uint8)
    return rgb


def write_ppm(plane: np.ndarray, path, scale="auto") -> tuple[float, float]:
    """Binary PPM (P6) of a (ny, nx) plane, highest y in the top row."""
    if scale == "auto":
        lo, hi = float(np.nanmin(plane)), float(np.nanmax(plane))
    else:
        lo, hi = (float(v) for v in scale)
    span = hi - lo
    t = (plane - lo) / span if span > 0 else np.where(np.isnan(plane), np.nan, 0.0)
    rgb = colormap(t)[::-1]
    ny, nx = plane.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    return lo, hi


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise MetricsError(f"{path}: not a binary PPM")
    nx, ny = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(ny, nx, 3)


def save_plane_csv(plane: np.ndarray, path, pitch, origin, layer) -> None:
    """Same layout as the power-map CSV (rows in increasing y)."""
    lines = [
        f"# pitch_um={pitch!r}",
        f"# origin_mm={origin[0]!r},{origin[1]!r}",
        f"# layer={layer}",
        "# unit=degC",
    ]
    lines += [",".join(f"{v:.17g}" for v in row) for row in plane]
    Path(path).write_text("\n".join(lines) + "\n")


def load_plane_csv(path):
    """Return ``(plane, meta)`` from a CSV written by ``save_plane_csv``."""
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    return np.array(rows), meta


def export_heatmap(fld: TemperatureField, layer: str, path, scale="auto") -> tuple[Path, Path]:
    """Write ``<path>`` (PPM) and its CSV twin for the layer's top slab."""
    try:
        plane = fld.layer_slice(layer)
    except KeyError as exc:
        raise MetricsError(str(exc)) from None
    path = Path(path)
    write_ppm(plane, path, scale)
    csv_path = path.with_suffix(".csv")
    m = fld.mesh
    save_plane_csv(plane, csv_path, m.pitch, (float(m.x_edges[0]), float(m.y_edges[0])), layer)
    return path, csv_path


def write_sidecar(fld: TemperatureField, path) -> None:
    eb = energy_balance(fld)
    lines = [
        f"iterations={fld.iterations}",
        f"relative_residual={fld.residual:.17g}",
        f"preconditioner={fld.preconditioner}",
        f"voxels={fld.mesh.n_active}",
        f"p_in_w={eb.p_in:.17g}",
        f"q_top_w={eb.q_top:.17g}",
        f"q_bottom_w={eb.q_bottom:.17g}",
        f"q_cut_w={eb.q_cut:.17g}",
        f"top_fraction={eb.top_fraction:.17g}",
        f"balance_residual={eb.residual:.17g}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def format_table(rows, headers) -> str:
    cols = [[str(h)] + [str(r[i]) for r in rows] for i, h in enumerate(headers)]
    widths = [max(len(c) for c in col) for col in cols]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    out.append("  ".join("-" * w for w in widths))
    for r in rows:
        out.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return "\n".join(out)
