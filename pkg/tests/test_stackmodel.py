import json

import pytest

from sipthermal.experiments import DATA_DIR
from sipthermal.stackmodel import (
    BoundaryCondition,
    Layer,
    Material,
    PackageStack,
    Preset,
    StackError,
    build_preset,
    layer_diff,
    load_stack,
    save_stack,
    stack_from_layers,
    stack_to_dict,
    validate,
)


def _write(tmp_path, data, name="stack.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _one_layer(k=10.0, **bnd):
    data = {
        "layers": [{"name": "slab", "dx_mm": 1, "dy_mm": 1, "thickness_um": 100, "k_w_mk": k}],
        "boundaries": {"top": {"htc_w_m2k": 1000, "ambient_c": 25}, "bottom": {"htc_w_m2k": 0}},
    }
    data["boundaries"].update(bnd)
    return data


def test_table1_file_has_eleven_layers():
    stack = load_stack(DATA_DIR / "table1.json")
    assert len(stack.layers) == 11
    hs = stack.layer("heat_sink")
    assert (hs.dx, hs.dy, hs.thickness, hs.k) == (100.0, 100.0, 3000.0, 400.0)
    assert stack.layer("pcb").k == 5.0
    assert stack.top.htc == 2500 and stack.bottom.htc == 200
    assert stack.warnings == ()


def test_negative_conductivity_rejected(tmp_path):
    with pytest.raises(StackError, match="non-positive conductivity"):
        load_stack(_write(tmp_path, _one_layer(k=-1)))


def test_missing_bottom_defaults_to_adiabatic_with_warning(tmp_path):
    data = _one_layer()
    del data["boundaries"]["bottom"]
    stack = load_stack(_write(tmp_path, data))
    assert stack.bottom.htc == 0.0
    assert any("bottom" in w for w in stack.warnings)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "layers": [\n    {"name": "a",}\n  ]\n}')
    with pytest.raises(StackError, match="line 3"):
        load_stack(p)


def test_missing_field_named(tmp_path):
    data = _one_layer()
    del data["layers"][0]["k_w_mk"]
    with pytest.raises(StackError, match="k_w_mk"):
        load_stack(_write(tmp_path, data))


def test_missing_file_is_stack_error(tmp_path):
    with pytest.raises(StackError):
        load_stack(tmp_path / "nope.json")


@pytest.mark.parametrize("preset", list(Preset))
def test_presets_validate_clean(preset):
    assert validate(build_preset(preset)) == []


def test_fspdn_has_thin_silicon():
    lay = build_preset(Preset.STACK1_FSPDN).layer("logic_si_thin")
    assert lay.thickness == 5.0 and lay.k == 135.0


def test_bspdn_layer_and_no_mz():
    stack = build_preset(Preset.STACK2_BSPDN)
    assert stack.layer("bspdn").k == 71.0
    assert "beol_mz_logic" not in stack.names


def test_sip25d_chiplet_footprints():
    stack = build_preset(Preset.SIP_25D)
    c = stack.layer("compute_die")
    io = stack.layer("io_die")
    assert (c.dx, c.dy) == (13.6, 19.6)
    assert (io.dx, io.dy) == (19.2, 22.6)
    # 100 um mold gap between the chiplets
    assert io.offset[0] - (c.offset[0] + c.dx) == pytest.approx(0.1)


def test_preset_delta_is_exactly_two_substitutions():
    f = build_preset(Preset.STACK1_FSPDN)
    b = build_preset(Preset.STACK2_BSPDN)
    only_f, only_b = layer_diff(f, b)
    assert only_f == ["beol_mz_logic", "logic_si_thin"]
    assert only_b == ["bspdn"]
    for name in set(f.names) & set(b.names):
        lf, lb = f.layer(name), b.layer(name)
        assert (lf.dx, lf.dy, lf.k, lf.offset) == (lb.dx, lb.dy, lb.k, lb.offset), name
        if name != "io_die":
            assert lf.thickness == lb.thickness, name


def test_sip25d_layer_order():
    names = build_preset(Preset.SIP_25D).names
    order = ["pcb", "solder_balls", "substrate", "ubumps", "interposer", "interposer_beol",
             "c_ubumps", "compute_die", "tim", "heat_spreader", "heat_sink"]
    assert [n for n in names if n in order] == order


@pytest.mark.parametrize("preset", list(Preset))
def test_round_trip(tmp_path, preset):
    s = build_preset(preset)
    p = tmp_path / "s.json"
    save_stack(s, p)
    again = load_stack(p)
    assert again == s
    save_stack(again, tmp_path / "t.json")
    assert (tmp_path / "t.json").read_text() == p.read_text()


def test_shipped_preset_files_match_builders():
    for preset, fname in ((Preset.SIP_25D, "sip_25d.json"), (Preset.STACK1_FSPDN, "stack1_fspdn.json"),
                          (Preset.STACK2_BSPDN, "stack2_bspdn.json")):
        assert load_stack(DATA_DIR / fname) == build_preset(preset)


def _stack(*layers, gap=3.0):
    return PackageStack(
        layers=tuple(layers),
        gap_fill=Material("mold", gap),
        top=BoundaryCondition("top", 100.0),
        bottom=BoundaryCondition("bottom", 0.0),
    )


def test_z_overlap_names_both_layers():
    a = Layer("a", 1, 1, 100, Material("m", 1.0), (0, 0), 0.0)
    b = Layer("b", 1, 1, 100, Material("m", 1.0), (0, 0), 50.0)
    problems = validate(_stack(a, b))
    overlaps = [p for p in problems if "overlap" in p]
    assert len(overlaps) == 1
    assert "'a'" in overlaps[0] and "'b'" in overlaps[0]


def test_die_larger_than_interposer_is_containment_violation():
    base = Layer("interposer", 10, 10, 50, Material("si", 140.0), (0, 0), 0.0)
    die = Layer("die", 12, 4, 10, Material("si", 140.0), (0, 1), 50.0)
    problems = validate(_stack(base, die))
    assert any("exceeds" in p and "'die'" in p for p in problems)


def test_vertical_gap_detected():
    a = Layer("a", 1, 1, 100, Material("m", 1.0), (0, 0), 0.0)
    b = Layer("b", 1, 1, 100, Material("m", 1.0), (0, 0), 150.0)
    assert any("vertical gap" in p for p in validate(_stack(a, b)))


def test_violations_ordered_bottom_to_top():
    a = Layer("a", 1, 1, 100, Material("ma", -1.0), (0, 0), 0.0)
    b = Layer("b", 1, 1, -5, Material("mb", 1.0), (0, 0), 100.0)
    c = Layer("c", 1, 1, 100, Material("mc", 0.0), (0, 0), 200.0)
    problems = validate(_stack(c, b, a))
    idx = [next(i for i, p in enumerate(problems) if f"'{n}'" in p) for n in "abc"]
    assert idx == sorted(idx)


def test_duplicate_names_and_material_conflict():
    a = Layer("a", 1, 1, 100, Material("m", 1.0), (0, 0), 0.0)
    b = Layer("a", 1, 1, 100, Material("m", 2.0), (0, 0), 100.0)
    problems = validate(_stack(a, b))
    assert any("duplicate" in p for p in problems)
    assert any("redefined" in p for p in problems)


def test_stack_from_layers_piles_up():
    s = stack_from_layers([("a", 2, 2, 10, 1.0), ("b", 2, 2, 20, 2.0)], top_htc=500)
    assert s.layer("b").z == 10.0 and s.height == 30.0
    assert validate(s) == []


def test_side_by_side_dies_via_z(tmp_path):
    d = stack_to_dict(build_preset(Preset.SIP_25D))
    assert d["layers"][-4]["name"] == "io_die"
    s = load_stack(_write(tmp_path, d))
    assert s.layer("io_die").z == s.layer("compute_die").z
