import numpy as np
import pytest

from conftest import slab, three_layer
from sipthermal import powermap as pm
from sipthermal.refine import (
    RefineError,
    Window,
    core_peak,
    extract_boundary,
    find_hottest_window,
    hottest_core,
    remap_power,
    solve_local,
    window_around,
)
from sipthermal.solver import TemperatureField, assemble, attach_power, discretize, solve


def _field(stack, pitch, values_fn, z="one_cell_per_layer"):
    mesh = discretize(stack, pitch, z)
    zc, yc, xc = np.meshgrid(mesh.z_centers, mesh.y_centers, mesh.x_centers, indexing="ij")
    return TemperatureField(values_fn(xc, yc, zc), mesh, 0, 0.0)


def _bump(x0, y0):
    return lambda x, y, z: 25 + 10 * np.exp(-((x - x0) ** 2 + (y - y0) ** 2) / 0.05)


def test_window_centred_on_single_hotspot():
    fld = _field(slab(size_mm=4.0), 100.0, _bump(2.05, 1.45))
    w = find_hottest_window(fld, (0.5, 0.5), "slab", fine_pitch=10.0)
    cx = (w.core[0] + w.core[2]) / 2
    cy = (w.core[1] + w.core[3]) / 2
    assert cx == pytest.approx(2.05, abs=0.011)
    assert cy == pytest.approx(1.45, abs=0.011)
    # margin of two coarse cells on each side
    assert w.rect[0] == pytest.approx(w.core[0] - 0.2)
    assert w.rect[3] == pytest.approx(w.core[3] + 0.2)


def test_tie_break_lowest_x_then_y():
    def two(x, y, z):
        v = np.full_like(x, 25.0)
        v[(np.abs(x - 3.05) < 0.01) & (np.abs(y - 0.95) < 0.01)] = 30.0
        v[(np.abs(x - 1.05) < 0.01) & (np.abs(y - 2.95) < 0.01)] = 30.0
        return v

    w = find_hottest_window(_field(slab(size_mm=4.0), 100.0, two), (0.4, 0.4), "slab", fine_pitch=10.0)
    assert (w.core[0] + w.core[2]) / 2 == pytest.approx(1.05, abs=0.011)


def test_corner_hotspot_clamped_inside():
    fld = _field(slab(size_mm=4.0), 100.0, _bump(3.95, 0.05))
    w = find_hottest_window(fld, (1.0, 1.0), "slab", fine_pitch=10.0)
    assert w.core == pytest.approx((3.0, 0.0, 4.0, 1.0))
    fx0, fy0, fx1, fy1 = slab(size_mm=4.0).footprint
    assert fx0 <= w.rect[0] and w.rect[2] <= fx1 and fy0 <= w.rect[1] and w.rect[3] <= fy1


def test_core_larger_than_layer():
    fld = _field(slab(size_mm=1.0), 100.0, _bump(0.5, 0.5))
    with pytest.raises(RefineError, match="exceeds"):
        find_hottest_window(fld, (2.0, 0.5), "slab")


def test_fine_pitch_must_not_exceed_global():
    with pytest.raises(RefineError):
        window_around(slab(size_mm=4.0), (1.0, 1.0, 2.0, 2.0), 200.0, 100.0)


def _window(stack, pitch=20.0, layers=("bond",)):
    return Window((1.0, 1.0, 2.0, 2.0), pitch, (1.2, 1.2, 1.8, 1.8), layers, "max_aspect(2)")


def test_uniform_field_gives_exact_bcs():
    stack = three_layer(size_mm=3.0)
    fld = _field(stack, 200.0, lambda x, y, z: np.full_like(x, 25.0), "max_aspect(2)")
    bcs = extract_boundary(fld, _window(stack))
    assert set(bcs.faces) == {"west", "east", "south", "north", "bottom", "top"}
    for v in bcs.faces.values():
        assert np.all(v == 25.0)


def test_bcs_bounded_by_global_extrema():
    stack = three_layer(size_mm=3.0)
    m = pm.gen_center_focused(1.0, 30, 30, 20.0, concentration=0.1, origin=(1.2, 1.2), layer="die")
    fld = solve(assemble(attach_power(discretize(stack, 200.0), m)))
    bcs = extract_boundary(fld, _window(stack, layers=None))
    assert fld.t_min <= bcs.t_min and bcs.t_max <= fld.t_max
    assert set(bcs.faces) == {"west", "east", "south", "north"}


def test_linear_field_reproduced_on_faces():
    stack = three_layer(size_mm=3.0)
    fld = _field(stack, 200.0, lambda x, y, z: 25 + 4.0 * x + 0.01 * z, "max_aspect(2)")
    w = _window(stack, layers=None)
    bcs = extract_boundary(fld, w)
    lm = bcs.mesh
    zc = lm.z_centers
    # trilinear interpolation is exact for linear data away from the clamped outer half-cells
    inner = (zc > fld.mesh.z_centers[0]) & (zc < fld.mesh.z_centers[-1])
    assert inner.sum() > 3
    west = (25 + 4.0 * 1.0 + 0.01 * zc)[:, None] * np.ones((1, lm.ny))
    np.testing.assert_allclose(bcs["west"][inner], west[inner], atol=1e-9)
    south = 25 + 4.0 * lm.x_centers[None, :] + 0.01 * zc[:, None]
    np.testing.assert_allclose(bcs["south"][inner], south[inner], atol=1e-9)


def test_zero_power_uniform_bcs():
    stack = three_layer(size_mm=3.0)
    fld = _field(stack, 200.0, lambda x, y, z: np.full_like(x, 25.0), "max_aspect(2)")
    w = _window(stack, layers=None)
    res = solve_local(stack, w, None, extract_boundary(fld, w))
    np.testing.assert_allclose(res.field.values, 25.0, atol=1e-12)


def test_self_consistency_whole_domain():
    stack = three_layer(size_mm=2.0)
    m = pm.gen_clustered(1.0, 50, 50, 20.0, block=25, peak_ratio=4.0, seed=2, origin=(0.5, 0.5), layer="die")
    tol = 1e-10
    g = solve(assemble(attach_power(discretize(stack, 100.0, "max_aspect(2)"), m)), tol=tol)
    w = Window(stack.footprint, 100.0, None, None, "max_aspect(2)")
    res = solve_local(stack, w, m, extract_boundary(g, w), g, tol=tol)
    rise = np.abs(g.values - 25).max()
    assert np.abs(res.field.values - g.values).max() <= 10 * tol * rise


def test_self_consistency_with_cut_faces():
    stack = three_layer(size_mm=2.0)
    m = pm.gen_center_focused(1.0, 50, 50, 20.0, concentration=0.2, origin=(0.5, 0.5), layer="die")
    tol = 1e-10
    g = solve(assemble(attach_power(discretize(stack, 20.0, "max_aspect(2)"), m)), tol=tol)
    w = Window((0.4, 0.4, 1.6, 1.6), 20.0, (0.5, 0.5, 1.5, 1.5), None, "max_aspect(2)")
    res = solve_local(stack, w, m, extract_boundary(g, w), g, tol=tol)
    assert res.local_peak == pytest.approx(res.global_peak, rel=1e-6)


def test_fine_power_replaces_coarse_in_every_slab():
    stack = three_layer(size_mm=2.0)
    m = pm.gen_uniform(1.0, 20, 20, 20.0, origin=(0.8, 0.8), layer="die")
    gm = attach_power(discretize(stack, 200.0, "max_aspect(8)"), m)
    lm = discretize(stack, 20.0, "max_aspect(2)", region=(0.6, 0.6, 1.4, 1.4))
    assert len(lm.layer_slabs("die")) > 1
    lm = lm.with_power(remap_power(gm, lm))
    assert lm.total_power == pytest.approx(1.0, rel=1e-12)
    out = attach_power(lm, m, replace_region=True)
    assert out.total_power == pytest.approx(1.0, rel=1e-12)


def test_remap_power_conserves_inside_window():
    stack = three_layer(size_mm=2.0)
    m = pm.gen_uniform(1.0, 10, 10, 200.0, layer="die")
    gm = attach_power(discretize(stack, 200.0), m)
    lm = discretize(stack, 50.0, region=(0.0, 0.0, 1.0, 2.0))
    assert remap_power(gm, lm).sum() == pytest.approx(0.5, rel=1e-12)


def test_fine_map_outside_window_rejected():
    stack = three_layer(size_mm=3.0)
    fld = _field(stack, 200.0, lambda x, y, z: np.full_like(x, 25.0), "max_aspect(2)")
    w = _window(stack, layers=None)
    m = pm.gen_uniform(1.0, 10, 10, 20.0, origin=(0.1, 0.1), layer="die")
    with pytest.raises(RefineError, match="not inside"):
        solve_local(stack, w, m, extract_boundary(fld, w))


def test_hottest_core_picks_the_hot_one():
    fld = _field(slab(size_mm=4.0), 100.0, _bump(3.0, 3.0))
    cores = [(0.5, 0.5, 1.5, 1.5), (2.5, 2.5, 3.5, 3.5)]
    assert hottest_core(fld, cores, "slab") == 1
    assert core_peak(fld, cores[1], "slab") > core_peak(fld, cores[0], "slab")


def test_global_local_close_to_monolithic_small():
    stack = three_layer(size_mm=2.0)
    core = (0.7, 0.7, 1.3, 1.3)
    m = pm.gen_center_focused(1.0, 60, 60, 10.0, concentration=0.25, origin=core[:2], layer="die")
    g = solve(assemble(attach_power(discretize(stack, 200.0, "max_aspect(8)"), m)))
    w = window_around(stack, core, 20.0, 200.0, 2, None, "max_aspect(2)")
    res = solve_local(stack, w, pm.resample(m, 20.0), extract_boundary(g, w), g, layer="die")
    mono = solve(assemble(attach_power(discretize(stack, 20.0, "max_aspect(2)"), pm.resample(m, 20.0))))
    ref = core_peak(mono, core, "die")
    assert abs((res.local_peak - 25) / (ref - 25) - 1) < 0.02
