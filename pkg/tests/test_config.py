import pytest

from dampns import ConfigError
from dampns.config import SCHEMA, format_config, load_config, parse_config

MINIMAL = """
[grid]
n_points = 16
"""


def test_minimal_config_echoes_defaults():
    cfg = parse_config(MINIMAL)
    d = cfg.to_dict()
    assert d["sim"]["nu"] == 1.0
    assert (d["damping"]["a"], d["damping"]["b"], d["damping"]["r"]) == (1.0, 1.0, 4.0)
    assert d["grid"]["trunc_radius"] == pytest.approx(16 / 3)
    assert set(d) == set(SCHEMA)
    for section, keys in SCHEMA.items():
        assert set(d[section]) == set(keys)


def test_empty_text_is_valid():
    assert parse_config("").grid().n_points == 32


def test_builders():
    cfg = parse_config(MINIMAL + "[damping]\nr = 7/3\nclip_mode = error\nv_max = 2\n[sim]\nscheme_order = 4\n")
    p = cfg.sim_params()
    assert p.damping.r == pytest.approx(7 / 3)
    assert p.clip.mode == "error" and p.clip.v_max == 2.0
    assert p.scheme_order == 4
    assert cfg.initial_field().check_invariants() == []


def test_trunc_radius_bound_names_the_bound():
    text = "[grid]\nn_points = 16\ntrunc_radius = 6\n"
    with pytest.raises(ConfigError, match=r"n/3") as info:
        parse_config(text)
    assert info.value.line == 3
    assert str(info.value).startswith("line 3:")


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="'viscosity'") as info:
        parse_config("[sim]\n# comment\nviscosity = 2\n")
    assert info.value.line == 3
    assert info.value.key == "sim.viscosity"


@pytest.mark.parametrize("text,line,fragment", [
    ("[nope]\n", 1, "unknown section"),
    ("n_points = 8\n", 1, "outside"),
    ("[grid]\nn_points\n", 2, "key = value"),
    ("[grid]\nn_points = 8\nn_points = 16\n", 3, "duplicate"),
    ("[grid]\nn_points = eight\n", 2, "cannot parse"),
    ("[grid]\nn_points = 8.5\n", 2, "integer"),
    ("[grid\n", 1, "malformed"),
    ("\n\n[sim]\nnu = -1\n", 4, "nu"),
    ("[damping]\nb = 0\n", 2, "b"),
    ("[damping]\nclip_mode = wrap\n", 2, "mode"),
    ("[initial]\nkind = vortex\n", 2, "kind"),
    ("[grid]\nn_points = 16\n[initial]\nkind = random\ncutoff = 9\n", 5, "cutoff"),
    ("[initial]\nkind = snapshot\npath = /no/such/file\n", 3, "not found"),
    ("[sweep]\nr_values = 1, 0.5\n", 2, "below 1"),
    ("[oracle]\noversample = 3\n", 2, "oversample"),
])
def test_line_anchored_errors(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config(text)
    assert info.value.line == line


def test_inline_comments_and_fractions():
    cfg = parse_config("[damping]\nr = 7/3   # threshold exponent\n[sweep]\nr_values = 2, 7/3, 3\n")
    assert cfg["damping"]["r"] == pytest.approx(7 / 3)
    assert cfg["sweep"]["r_values"] == pytest.approx([2, 7 / 3, 3])


def test_overrides():
    cfg = parse_config(MINIMAL + "[sim]\ndt = 0.01\n", ["sim.dt=0.002", "damping.a = 0"])
    assert cfg["sim"]["dt"] == 0.002
    assert cfg["damping"]["a"] == 0.0
    assert cfg.lines[("sim", "dt")] == "override sim.dt"
    with pytest.raises(ConfigError, match="section.key"):
        parse_config("", ["dt=1"])
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("", ["sim.foo=1"])


def test_override_error_names_the_override():
    with pytest.raises(ConfigError, match="nu") as info:
        parse_config("", ["sim.nu=-2"])
    assert info.value.line == "override sim.nu"


def test_format_round_trip(tmp_path):
    cfg = parse_config(MINIMAL + "[sweep]\nr_values = 1, 7/3\n")
    path = tmp_path / "echo.ini"
    path.write_text(format_config(cfg))
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert again.source == str(path)
