import math

import numpy as np
import pytest

from mvgp_cbf.config import PRESETS, ConfigError, ScenarioConfig, load_config, parse_config, preset, substream


def test_defaults_and_parsing():
    cfg = parse_config("""
        # comment line
        system = ackermann   # trailing comment
        R = 1, 2
        u_min = -1, -2
        u_max = 1, 2
        obstacles = 0, 0, 0.5; 1.0, 2.0, 0.25
        measurement_noise = yes
        tau_max = none
        active_dims = 2
    """)
    assert cfg.system == "ackermann" and cfg.n == 3 and cfg.m == 2
    assert cfg.obstacles == ((0.0, 0.0, 0.5), (1.0, 2.0, 0.25))
    assert cfg.measurement_noise is True
    assert cfg.tau_max is None and cfg.hold_cap == pytest.approx(10 * cfg.dt)
    assert cfg.active_dims == (2,)
    assert ScenarioConfig().n == 2


@pytest.mark.parametrize("text,match", [
    ("colour = red", r":1: unknown key 'colour'"),
    ("steps = 3\nsteps = 4", r":2: duplicate key 'steps'"),
    ("steps 3", r":1: expected key = value"),
    ("steps = many", r":1: steps"),
    ("system = boat", r"expected one of"),
    ("steps = 0", r"steps must be positive"),
    ("p_safe = 1.0", r"p_safe must lie in"),
    ("R = 1, 1\nu_min = -1, -1\nu_max = 1, 1", r"pendulum has 1 input"),
    ("obstacles = 1, 2", r"obstacle needs ox, oy, r"),
    ("measurement_noise = maybe", r"not a boolean"),
    ("poles = -1, 2", r"poles must be negative"),
    ("lengthscales = 1, 2, 3", r"lengthscales length mismatch"),
])
def test_errors_carry_location(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "scenario.cfg")


def test_load_config(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("steps = 7\nseed = 3\n")
    cfg = load_config(p)
    assert cfg.steps == 7 and cfg.seed == 3
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = preset(name)
    assert isinstance(cfg, ScenarioConfig)
    assert cfg.with_overrides(seed=5).seed == 5


def test_preset_values():
    cfg = preset("pendulum")
    assert (cfg.theta0_deg, cfg.theta_c_deg, cfg.delta_col_deg) == (75.0, 45.0, 22.5)
    assert cfg.dt == 0.01 and cfg.steps == 1000 and cfg.p_safe == 0.99
    mean, bayes = preset("ackermann_mean_cbf"), preset("ackermann_bayes_cbf")
    assert mean.p_safe == 0.5 and bayes.p_safe == 0.99
    assert mean.wheelbase == 12 and mean.prior_wheelbase == 1
    learn, stuck = preset("ackermann_learning"), preset("ackermann_no_learning")
    assert learn.learning_period == 40 and stuck.learning_period == 0
    assert learn.wheelbase == 1 and learn.prior_wheelbase == 8
    trig = preset("trigger")
    assert trig.steps == 200 and trig.delta_L == 1e-4 and trig.trigger_zeta == 0.01 and trig.L_alpha == 1
    np.testing.assert_allclose(trig.region_half_widths, [0.1, 0.1, math.pi / 100])
    with pytest.raises(ConfigError):
        preset("nope")
    assert preset("pendulum", steps=5).steps == 5


def test_substreams_are_independent_and_stable():
    a = substream(0, "noise").standard_normal(4)
    np.testing.assert_array_equal(a, substream(0, "noise").standard_normal(4))
    assert not np.array_equal(a, substream(0, "model-init").standard_normal(4))
    assert not np.array_equal(a, substream(1, "noise").standard_normal(4))
