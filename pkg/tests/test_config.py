import pytest

from duoglass import config as cf
from duoglass import panel as pg
from duoglass.electro import MATERIALS
from duoglass.errors import ConfigError


def test_empty_file_gives_defaults():
    cfg = cf.parse_config("")
    assert cfg == cf.RunConfig()
    assert cfg.panel == pg.preset("stage3")
    assert any("defaults used" in n for n in cfg.notices)


def test_material_preset():
    cfg = cf.parse_config("[material]\nname = HCM-009\n")
    assert cfg.material == MATERIALS["HCM-009"]


def test_custom_material():
    cfg = cf.parse_config("[material]\nname = mine\ni_min = 0.1\ni_max = 2\nv_mid = 5\n"
                          "v_width = 1\n")
    assert cfg.material.name == "mine" and cfg.material.i_max == 2.0


def test_custom_material_incomplete():
    with pytest.raises(ConfigError) as info:
        cf.parse_config("[material]\nname = mine\ni_min = 0.1\n")
    assert "v_mid" in str(info.value) and info.value.line == 1


def test_type_mismatch_names_key_and_line():
    with pytest.raises(ConfigError) as info:
        cf.parse_config("# timing\n[timing]\nframe_rate = sixty\n")
    assert info.value.line == 3
    assert "frame_rate" in str(info.value) and "line 3" in str(info.value)


@pytest.mark.parametrize("text,line", [
    ("[bogus]\n", 1),
    ("[panel]\ncolour = red\n", 2),
    ("key = 1\n", 1),
    ("[panel]\n[panel]\n", 2),
    ("[panel]\npixel_cols = 2\npixel_cols = 3\n", 3),
    ("[panel]\nthis is not a pair\n", 2),
    ("[mask]\nblocking_efficiency = 1.5\n", 1),
    ("[simulation]\ndt = 0\n", 2),
    ("[panel]\nmasked = maybe\n", 2),
])
def test_config_errors(text, line):
    with pytest.raises(ConfigError) as info:
        cf.parse_config(text)
    assert info.value.line == line


def test_required_section():
    with pytest.raises(ConfigError):
        cf.parse_config("[panel]\npreset = stage2\n", require=("input",))


def test_preset_with_override():
    cfg = cf.parse_config("[panel]\npreset = stage2\nmask_margin = 5\n")
    assert cfg.panel.pixel_cols == 4 and cfg.panel.mask_margin == 5.0
    assert cfg.panel_preset is None


def test_auto_values():
    cfg = cf.parse_config("[mask]\noff_state_background = auto\n[stack]\nmask_loss = 0.1\n")
    assert cfg.mask.off_state_background is None and cfg.stack.mask_loss == 0.1


def test_round_trip_defaults():
    text = cf.describe_defaults()
    cfg = cf.parse_config(text)
    assert cfg == cf.RunConfig()
    assert cf.serialize_config(cfg) == text


def test_named_config_and_preset_loading():
    assert "stage2-asbuilt" in cf.named_configs()
    cfg = cf.load_config("stage2-asbuilt")
    assert cfg.panel == pg.preset("stage2")
    assert cfg.mask.off_state_background == pytest.approx(0.6783)
    assert cf.load_config("stage1").panel == pg.preset("stage1")


def test_load_from_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("[timing]\nframe_rate = 50\nside_order = BA\n")
    cfg = cf.load_config(p)
    assert cfg.timing.frame_rate == 50.0 and cfg.timing.side_order == "BA"
