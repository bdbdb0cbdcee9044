import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sipthermal import powermap as pm
from sipthermal.powermap import PowerMap, PowerMapError
from sipthermal.stackmodel import Preset, build_preset, compute_die_rect


def test_total_power_uniform_cells():
    m = PowerMap(np.full((100, 100), 0.0002), 5.0)
    assert pm.total_power(m) == pytest.approx(2.0, rel=1e-15)


def test_total_power_zero_map():
    assert pm.total_power(PowerMap(np.zeros((3, 4)), 5.0)) == 0.0


def test_center_focused_total_exact():
    m = pm.gen_center_focused(3.0, 100, 100, 5.0, concentration=0.3)
    assert abs(pm.total_power(m) - 3.0) <= 1e-12 * 3.0


def test_gen_uniform_quarters():
    m = pm.gen_uniform(2.0, 2, 2, 5.0)
    assert np.array_equal(m.cells, np.full((2, 2), 0.5))


def test_gen_uniform_zero_total():
    assert not pm.gen_uniform(0.0, 3, 3, 5.0).cells.any()


@pytest.mark.parametrize("nx,ny", [(0, 3), (3, 0), (-1, 2)])
def test_gen_uniform_bad_dims(nx, ny):
    with pytest.raises(PowerMapError):
        pm.gen_uniform(1.0, nx, ny, 5.0)


def test_clustered_sixteen_blocks_share_power():
    m = pm.gen_clustered(2.0, 100, 100, 5.0, block=25, peak_ratio=4.0, seed=3)
    blocks = m.cells.reshape(4, 25, 4, 25).sum(axis=(1, 3))
    assert blocks.shape == (4, 4)
    np.testing.assert_allclose(blocks, 2.0 / 16, rtol=1e-12)


def test_clustered_peak_ratio_is_met():
    m = pm.gen_clustered(1.0, 50, 50, 5.0, block=25, peak_ratio=3.0, seed=11)
    b = m.cells[:25, :25]
    assert b.max() / b.mean() == pytest.approx(3.0, rel=1e-6)


def test_clustered_peak_ratio_one_is_uniform():
    assert pm.gen_clustered(2.0, 50, 50, 5.0, peak_ratio=1.0, seed=5) == pm.gen_uniform(2.0, 50, 50, 5.0)


def test_clustered_seed_deterministic():
    a = pm.gen_clustered(2.0, 100, 100, 5.0, seed=7)
    b = pm.gen_clustered(2.0, 100, 100, 5.0, seed=7)
    assert a.cells.tobytes() == b.cells.tobytes()
    c = pm.gen_clustered(2.0, 100, 100, 5.0, seed=8)
    assert not np.array_equal(a.cells, c.cells)


def test_clustered_errors():
    with pytest.raises(PowerMapError, match="divisible"):
        pm.gen_clustered(1.0, 30, 25, 5.0)
    with pytest.raises(PowerMapError, match="peak_ratio"):
        pm.gen_clustered(1.0, 25, 25, 5.0, peak_ratio=0.5)


def test_center_focused_full_is_uniform():
    assert pm.gen_center_focused(2.0, 40, 40, 5.0, concentration=1.0) == pm.gen_uniform(2.0, 40, 40, 5.0)


def test_center_focused_quarter_layout():
    m = pm.gen_center_focused(2.0, 100, 100, 5.0, concentration=0.25)
    hot = m.cells[25:75, 25:75]
    np.testing.assert_allclose(hot, 2.0 / 2500, rtol=1e-14)
    rest = m.cells.copy()
    rest[25:75, 25:75] = 0
    assert not rest.any()


@pytest.mark.parametrize("c", [0.0, -0.1, 1.5])
def test_center_focused_range(c):
    with pytest.raises(PowerMapError, match="concentration"):
        pm.gen_center_focused(1.0, 10, 10, 5.0, concentration=c)


def test_center_focused_background():
    m = pm.gen_center_focused(1.0, 20, 20, 5.0, concentration=0.25, background=0.2)
    assert m.cells.min() > 0
    assert pm.total_power(m) == pytest.approx(1.0, rel=1e-12)
    assert pm.hot_fraction(m) == pytest.approx(0.25)


def test_load_two_by_two(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("# pitch_um=5\n0.1,0.2\n0.3,0.4\n")
    m = pm.load_power_map(p)
    assert (m.nx, m.ny, m.pitch) == (2, 2, 5.0)
    assert pm.total_power(m) == pytest.approx(1.0, rel=1e-15)


def test_load_negative_names_row_col(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("# pitch_um=5\n0.1,0.2\n0.3,-0.4\n")
    with pytest.raises(PowerMapError, match="row 1, col 1"):
        pm.load_power_map(p)


def test_load_ragged_and_missing_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("# pitch_um=5\n0.1,0.2\n0.3\n")
    with pytest.raises(PowerMapError, match="row 1"):
        pm.load_power_map(p)
    p.write_text("0.1,0.2\n")
    with pytest.raises(PowerMapError, match="pitch_um"):
        pm.load_power_map(p)


def test_round_trip_exact(tmp_path):
    m = pm.gen_clustered(2.0, 50, 50, 5.0, seed=2, origin=(40.1, 49.75), layer="logic_feol")
    p = tmp_path / "m.csv"
    pm.save_power_map(m, p)
    assert pm.load_power_map(p) == m


def test_footprint_overflow_against_layer(tmp_path):
    stack = build_preset(Preset.STACK1_FSPDN)
    x0, y0, x1, y1 = compute_die_rect()
    m = pm.gen_uniform(1.0, 10, 10, 200.0, origin=(x1 - 1.0, y0))
    p = tmp_path / "m.csv"
    pm.save_power_map(m, p)
    with pytest.raises(PowerMapError, match="footprint"):
        pm.load_power_map(p, stack)
    pm.check_fits(m.moved(origin=(x0, y0)), stack)


def test_resample_refine_constant():
    m = pm.gen_uniform(2.0, 2, 2, 200.0)
    fine = pm.resample(m, 5.0)
    assert (fine.nx, fine.ny) == (80, 80)
    np.testing.assert_allclose(fine.cells, 0.5 / 1600, rtol=1e-12)
    assert pm.total_power(fine) == pytest.approx(2.0, rel=1e-12)


def test_resample_round_trip_exact():
    m = pm.gen_clustered(1.0, 50, 50, 10.0, seed=4)
    back = pm.resample(pm.resample(m, 5.0), 10.0)
    np.testing.assert_allclose(back.cells, m.cells, rtol=1e-12, atol=0)


def test_down_up_smooths_peak():
    m = pm.gen_clustered(2.0, 100, 100, 5.0, seed=1)
    coarse = pm.resample(m, 250.0)
    back = pm.resample(coarse, 5.0)
    assert back.cells.max() < m.cells.max()


def test_resample_requires_fit_choice():
    m = pm.gen_uniform(1.0, 3, 3, 5.0)
    with pytest.raises(PowerMapError, match="pad"):
        pm.resample(m, 10.0)
    padded = pm.resample(m, 10.0, fit="pad")
    cropped = pm.resample(m, 10.0, fit="crop")
    assert (padded.nx, cropped.nx) == (2, 1)
    assert pm.total_power(padded) == pytest.approx(1.0, rel=1e-12)
    assert pm.total_power(cropped) == pytest.approx(1.0, rel=1e-12)


def test_bilinear_filtered_keeps_total_and_sign():
    m = pm.gen_center_focused(2.0, 40, 40, 5.0, concentration=0.1)
    r = pm.resample(m, 2.5, method="bilinear_filtered")
    assert (r.nx, r.ny) == (80, 80)
    assert r.cells.min() >= 0
    assert pm.total_power(r) == pytest.approx(2.0, rel=1e-9)


def test_cells_are_read_only():
    m = pm.gen_uniform(1.0, 2, 2, 5.0)
    with pytest.raises(ValueError):
        m.cells[0, 0] = 5.0


def test_overlap_matrix_rows():
    w = pm.overlap_matrix(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 2.0]))
    # w[dst, src]: share of each source cell landing in each target cell
    np.testing.assert_allclose(w, [[0.5, 0.0], [0.5, 1.0]])
    np.testing.assert_allclose(w.sum(axis=0), 1.0)


@settings(max_examples=120, deadline=None)
@given(
    total=st.floats(1e-6, 1e3),
    blocks=st.integers(1, 4),
    block=st.sampled_from([5, 10, 25]),
    ratio=st.floats(1.0, 20.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_clustered_conserves(total, blocks, block, ratio, seed):
    m = pm.gen_clustered(total, blocks * block, block, 5.0, block=block, peak_ratio=min(ratio, block * block), seed=seed)
    assert abs(pm.total_power(m) - total) <= 1e-9 * total
    assert m.cells.min() >= 0
