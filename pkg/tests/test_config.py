import math

import pytest

from twpisf.config import PRESETS, env_overrides, load_config, parse_config, preset_text
from twpisf.errors import ConfigError
from twpisf.units import thermal_time, thermal_wavelength


def test_ballistic_preset():
    cfg = parse_config(preset_text("ballistic"))
    assert cfg.mass_u == 1.0 and cfg.temperature == 300.0
    assert cfg.length_A == pytest.approx(20 * thermal_wavelength(1.0, 300.0), rel=1e-14)
    assert cfg.n_points == 800
    assert cfg.t_max_ps == pytest.approx(5 * thermal_time(300.0), rel=1e-14)
    assert cfg["time.n_times"] == 101 and cfg.n_samples == 60 and cfg.seed == 42


def test_co_preset():
    cfg = parse_config(preset_text("co-cu100"))
    assert cfg.length_A == pytest.approx(80 * 2.556, rel=1e-14)
    assert cfg.n_points == 4000
    assert cfg.t_max_ps == 200.0 and cfg["time.n_times"] == 40001
    assert cfg["potential.amplitude_meV"] == 33.5 and cfg["grid.boundary"] == "periodic"


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_text("nope")


def test_missing_mass_named():
    text = preset_text("ballistic").replace("system.mass_u = 1.0\n", "")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("system.mass_u" in p for p in exc.value.problems)


def test_all_problems_reported_with_lines():
    text = "system.mass_u = -1\nsystem.temperature_K = abc\nbogus.key = 3\nno equals here\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    probs = exc.value.problems
    assert any(p.startswith("line 1:") and "mass_u" in p for p in probs)
    assert any(p.startswith("line 2:") and "temperature_K" in p for p in probs)
    assert any(p.startswith("line 3:") and "bogus.key" in p for p in probs)
    assert any(p.startswith("line 4:") for p in probs)
    assert any("grid.boundary" in p for p in probs)
    assert any("time.n_times" in p for p in probs)


def test_duplicate_and_inconsistent_keys():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(preset_text("ballistic") + "system.mass_u = 2\n")
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(preset_text("ballistic") + "grid.length_A = 10\n")
    with pytest.raises(ConfigError, match="cosine needs grid.boundary"):
        parse_config(preset_text("ballistic").replace("kind = free", "kind = cosine")
                     + "potential.amplitude_meV = 1\npotential.cell_A = 2\n")


def test_env_and_extra_overrides():
    env = {"TWPISF_ENSEMBLE__SEED": "7", "TWPISF_SYSTEM__TEMPERATURE_K": "150", "OTHER": "x"}
    assert env_overrides(env) == {"ensemble.seed": "7", "system.temperature_K": "150"}
    cfg = load_config(preset_text("ballistic"), environ=env, extra={"ensemble.seed": "9"})
    assert cfg.seed == 9 and cfg.temperature == 150.0
    with pytest.raises(ConfigError) as exc:
        load_config(preset_text("ballistic"), environ={"TWPISF_SYSTEM__MASS_U": "0"})
    assert exc.value.problems[0].startswith("override:")


def test_digest():
    a = parse_config(preset_text("ballistic"))
    b = parse_config("\n# comment\n" + "\n".join(reversed(preset_text("ballistic").splitlines())))
    assert a.digest == b.digest and len(a.digest) == 64
    c = parse_config(preset_text("ballistic") + "output.directory = elsewhere\n")
    assert c.digest == a.digest
    d = parse_config(preset_text("ballistic").replace("seed = 42", "seed = 43"))
    assert d.digest != a.digest
    assert a.replace(**{"ensemble.seed": 43}).digest == d.digest


def test_every_preset_parses():
    for name in PRESETS:
        cfg = parse_config(preset_text(name))
        assert math.isfinite(cfg.t_max_ps)
