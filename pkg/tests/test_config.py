import pytest

from qdbell.config import (PRESETS, ConfigError, load_config, load_preset, parse_config,
                           preset_text, resolve_config)
from qdbell.source import calibrate

BASE = """
splitting_ueV = 0.3
tau_xx_ns = 0.4
tau_x_ns = 0.8
pulse_width_ns = 0.1
rep_period_ns = 12.5
background_fraction = 0.05
tau_bg_ns = 0.1
reexcite_prob = 0.1
dark_rate_hz = 1e4
detect_efficiency = 0.2
n_pulses = 1000
"""


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    cfg = load_preset(name)
    assert cfg.n_pulses == 1_000_000
    assert [s.label for s in cfg.settings][:3] == ["rectilinear", "diagonal", "circular"]
    assert len(cfg.settings) == 7


def test_calibrated_preset_matches_calibration():
    cfg = load_preset("noise-calibrated")
    src = calibrate(0.794, 2.15, cfg.source)
    assert src.tau_x_ns == pytest.approx(cfg.source.tau_x_ns, rel=1e-12)
    assert src.reexcite_prob == pytest.approx(cfg.source.reexcite_prob, rel=1e-9)


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.seed == 20080301
    assert cfg.gate_placement == "onset"
    assert len(cfg.settings) == 7


def test_missing_key_named():
    text = BASE.replace("tau_x_ns = 0.8\n", "")
    with pytest.raises(ConfigError, match="tau_x_ns"):
        parse_config(text)


def test_unknown_key_line_number():
    with pytest.raises(ConfigError, match="line 13.*colour"):
        parse_config(BASE + "colour = blue\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(BASE + "tau_x_ns = 0.9\n")


def test_bad_number():
    with pytest.raises(ConfigError, match="tau_xx_ns"):
        parse_config(BASE.replace("tau_xx_ns = 0.4", "tau_xx_ns = fast"))


def test_out_of_range_value():
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("background_fraction = 0.05", "background_fraction = 1.5"))


def test_no_equals():
    with pytest.raises(ConfigError, match="line 13"):
        parse_config(BASE + "just words\n")


def test_comments_ignored():
    cfg = parse_config("# header\n" + BASE.replace("n_pulses = 1000", "n_pulses = 1000  # few"))
    assert cfg.n_pulses == 1000


def test_settings_subset_and_chain():
    cfg = parse_config(BASE + "settings = diagonal\nsetting.tilted = hwp:10 pol:0 | qwp:45 pol:0\n")
    assert [s.label for s in cfg.settings] == ["diagonal", "tilted"]
    tilted = cfg.settings[1]
    assert tilted.id == 1
    assert len(tilted.channel1_chain) == 2 and len(tilted.channel2_chain) == 2


def test_bad_chain():
    with pytest.raises(ConfigError, match="line 13"):
        parse_config(BASE + "setting.bad = hwp:10 pol:0\n")


def test_duplicate_labels():
    with pytest.raises(ConfigError, match="unique"):
        parse_config(BASE + "settings = diagonal\nsetting.diagonal = pol:0 | pol:0\n")


def test_unknown_setting_label():
    with pytest.raises(ConfigError):
        parse_config(BASE + "settings = rectilinear, sideways\n")


def test_bad_gate_placement():
    with pytest.raises(ConfigError, match="gate_placement"):
        parse_config(BASE + "gate_placement = middle\n")


def test_gate_too_wide():
    with pytest.raises(ConfigError):
        parse_config(BASE + "gate_x_ns = 20\n")


def test_gate_placements():
    cfg = parse_config(BASE)
    onset, peak = cfg.gate(), cfg.gate(placement="peak")
    assert onset.xx_window[0] == pytest.approx(1.0 + 0.1 + 0.1)
    assert peak.xx_window != onset.xx_window


def test_load_and_resolve(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE)
    assert load_config(path).n_pulses == 1000
    assert resolve_config(str(path)).n_pulses == 1000
    assert resolve_config("preset:separable").source.splitting_ueV == 50
    assert resolve_config("uncorrelated").source.background_fraction == 1.0


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.cfg")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_text("nope")
