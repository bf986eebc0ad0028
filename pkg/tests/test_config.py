import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavityqed.config import (ConfigError, default_scenario, load_scenario, parse_quantity,
                              scenario_from_text)

UNITS = [("MHz", "frequency", 1e6), ("kHz", "frequency", 1e3), ("uK", "temperature", 1e-6),
         ("µK", "temperature", 1e-6), ("pW", "power", 1e-12), ("mW", "power", 1e-3),
         ("mm", "length", 1e-3), ("um", "length", 1e-6), ("nm", "length", 1e-9),
         ("ms", "time", 1e-3), ("us", "time", 1e-6)]


@pytest.mark.parametrize("unit,kind,factor", UNITS)
def test_unit_suffixes(unit, kind, factor):
    assert parse_quantity(f"2.5 {unit}", kind) == pytest.approx(2.5 * factor, rel=1e-15)
    assert parse_quantity(f"2.5{unit}", kind) == pytest.approx(2.5 * factor, rel=1e-15)


def test_exact_decimal_scaling():
    assert parse_quantity("10 um", "length") == 1e-5
    assert parse_quantity("6.4 pW", "power") == 6.4e-12
    assert parse_quantity("782.5 nm", "length") == 782.5e-9
    assert parse_quantity(3, "power") == 3.0
    assert parse_quantity("1.5 g", "acceleration") == pytest.approx(1.5 * 9.80665)


@given(st.floats(1e-6, 1e6), st.sampled_from(UNITS))
def test_unit_scaling_property(v, u):
    unit, kind, factor = u
    assert parse_quantity(f"{v!r} {unit}", kind) == pytest.approx(v * factor, rel=1e-14)


@pytest.mark.parametrize("value,kind", [("3 MHz", "length"), ("abc", "power"), (True, "power"),
                                        ("5 furlongs", "length"), ([1], "time")])
def test_bad_quantities(value, kind):
    with pytest.raises(ConfigError):
        parse_quantity(value, kind, "x.y", 3)


def test_default_scenario():
    sc = default_scenario()
    assert sc.preset == "paper-2003"
    assert sc.probe_powers == [2e-12, 6.4e-12, 20e-12, 30e-12]
    assert sc.beams["fort"].waist == 30e-6
    assert sc.cloud["fwhm"] == 1.5e-3
    assert sc.dt == 2e-6
    assert len(sc.config_hash) == 16
    assert default_scenario().config_hash == sc.config_hash


def test_hash_tracks_content():
    base = "preset: paper-2003\nprobe: {powers: [2 pW]}\n"
    a = scenario_from_text(base)
    assert scenario_from_text(base + "seed: 0\n").config_hash == a.config_hash
    assert scenario_from_text("preset: paper-2003\nprobe: {powers: [2e-12]}\n").config_hash == a.config_hash
    assert scenario_from_text(base.replace("2 pW", "3 pW")).config_hash != a.config_hash
    assert scenario_from_text(base + "seed: 4\n").config_hash != a.config_hash


def test_error_carries_line_and_field():
    text = "preset: paper-2003\nseed: 1\nbeams:\n  fort: {power: 16 MHz, waist: 30 um, wavelength: 782.5 nm}\n"
    with pytest.raises(ConfigError) as e:
        scenario_from_text(text, "scn.yaml")
    msg = str(e.value)
    assert "scn.yaml:4" in msg and "beams.fort.power" in msg
    assert e.value.line == 4


@pytest.mark.parametrize("text,needle", [
    ("seed: 1\n", "exactly one"),
    ("preset: paper-2003\nparams: {}\n", "exactly one"),
    ("preset: nope\n", "preset"),
    ("preset: paper-2003\nbogus: 1\n", "bogus"),
    ("preset: paper-2003\nseed: -3\n", "seed"),
    ("preset: paper-2003\nseed: 1.5\n", "seed"),
    ("preset: paper-2003\ncloud: {fwhm: 1 ms}\n", "peak_coop"),
    ("preset: paper-2003\ncloud: {peak_coop: 10, fwhm: -1 ms}\n", "cloud"),
    ("preset: paper-2003\nsimulation: {dt: 1 ms}\n", "dt"),
    ("preset: paper-2003\nprobe: {powers: [-1 pW]}\n", "powers"),
    ("preset: paper-2003\nprobe: {schedule: [[0 ms, 1 pW], [0 ms, 2 pW]]}\n", "increasing"),
    ("preset: [unclosed\n", "YAML"),
])
def test_invalid_configs(text, needle):
    with pytest.raises(ConfigError, match=needle):
        scenario_from_text(text)


def test_explicit_params_match_preset():
    text = """\
params:
  atom: {gamma: 6.0 MHz, lambda: 780.241209 nm, i_sat: 16.7, mass: 86.909180527 u}
  cavity: {g0: 16 MHz, kappa: 1.4 MHz, length: 44.6 um, mirror_radius: 20 cm, lambda: 780.241209 nm}
"""
    sc = scenario_from_text(text)
    ref = default_scenario()
    assert sc.preset is None
    assert sc.cavity.g0 == pytest.approx(2 * np.pi * 16e6)
    assert sc.atom.mass == pytest.approx(ref.atom.mass, rel=1e-9)


def test_schedule_and_missing_file(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("preset: paper-2003\nprobe: {schedule: [[0 ms, 0 pW], [1 ms, 30 pW]]}\n")
    sc = load_scenario(p)
    assert sc.probe_schedule == [(0.0, 0.0), (1e-3, 30e-12)]
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "absent.yaml")
