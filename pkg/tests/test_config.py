import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starhnoma import config as cfgmod
from starhnoma.config import (
    ConfigError,
    SystemConfig,
    config_hash,
    dbm_to_watts,
    load_config,
    make_config,
    watts_to_dbm,
)


@pytest.mark.parametrize(
    "dbm,watts",
    [(30.0, 1.0), (0.0, 0.001)],
)
def test_dbm_to_watts_known_points(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-12)


def test_noise_floor_conversion():
    w = dbm_to_watts(-104.0)
    assert w == pytest.approx(10.0 ** (-13.4), rel=1e-12)
    assert w == pytest.approx(3.981e-14, rel=1e-3)  # table value, rounded


@given(st.floats(min_value=-190.0, max_value=120.0, allow_nan=False))
def test_dbm_round_trip(level):
    assert watts_to_dbm(dbm_to_watts(level)) == pytest.approx(level, abs=1e-12)


def test_watts_to_dbm_rejects_nonpositive():
    with pytest.raises(ValueError):
        watts_to_dbm(0.0)


def test_defaults_match_scenario_table():
    cfg = load_config("")
    assert cfg.tx_power_max == pytest.approx(1.0)          # 30 dBm
    assert cfg.n_surface_elements == 16
    assert cfg.n_tx_antennas == 16
    assert cfg.n_users == 6
    assert cfg.n_clusters == 3
    assert cfg.noise_power == pytest.approx(dbm_to_watts(-104.0))
    assert cfg.bandwidth == pytest.approx(10e6)
    assert cfg.pathloss_exp_bs_surface == pytest.approx(2.2)
    assert cfg.pathloss_exp_surface_user == pytest.approx(2.8)
    assert cfg.shadowing_std == pytest.approx(5.8)
    assert cfg.pathloss_ref == pytest.approx(60.0)
    assert cfg.carrier_freq == pytest.approx(28e9)
    assert cfg.coherence_time == pytest.approx(650e-6)
    assert cfg.bs_position == (0.0, 0.0, 20.0)
    assert cfg.surface_position == (45.0, -22.0, 0.0)
    assert cfg.user_region_radius == 50.0
    assert cfg.phase_bits == 3 and cfg.amplitude_bits == 3


def test_odd_user_count_rejected():
    with pytest.raises(ConfigError, match="even"):
        load_config("n_users: 5\nn_clusters: 2\n")


def test_cluster_count_must_be_half():
    with pytest.raises(ConfigError, match="K/2"):
        load_config("n_users: 8\nn_clusters: 3\n")


def test_load_config_is_pure():
    text = "n_users: 4\nn_clusters: 2\nseed: 9\np_max_dbm: 20\n"
    assert load_config(text) == load_config(text)


def test_symbol_aliases_accepted():
    cfg = load_config("P_max: 20\nM: 36\nN: 4\nK: 4\nC: 2\nB1: 2\nB2: 4\nzeta: 3.0\n")
    assert cfg.tx_power_max == pytest.approx(dbm_to_watts(20.0))
    assert cfg.n_surface_elements == 36
    assert cfg.n_tx_antennas == 4
    assert cfg.phase_bits == 2 and cfg.amplitude_bits == 4
    assert cfg.shadowing_std == pytest.approx(3.0)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        load_config("frobnicate: 1\n")


def test_parse_failure_reported():
    with pytest.raises(ConfigError, match="parse"):
        load_config("n_users: [unclosed\n")


def test_array_factorisations():
    cfg = make_config(M=12, N=6, K=2, C=1)
    assert cfg.m_y * cfg.m_z == 12
    assert cfg.n_ty * cfg.n_tz == 6
    with pytest.raises(ConfigError, match="n_ty"):
        SystemConfig(n_tx_antennas=6, n_ty=4, n_tz=2, n_users=2, n_clusters=1)


def test_qos_scalar_expansion():
    cfg = load_config("K: 4\nC: 2\nqos_min_rate: 0.3\n")
    assert cfg.qos_min_rates == (0.3, 0.3, 0.3, 0.3)
    with pytest.raises(ConfigError, match="qos"):
        make_config(K=4, C=2, qos_min_rates=(0.1,))


def test_env_seed_override(monkeypatch):
    cfg = make_config(seed=1)
    monkeypatch.setenv(cfgmod.ENV_SEED, "42")
    assert cfgmod.apply_env_overrides(cfg).seed == 42


def test_config_hash_stable_and_sensitive():
    a = make_config(seed=1)
    b = make_config(seed=1)
    c = make_config(seed=2)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_trial_rngs_independent_and_reproducible():
    r1 = cfgmod.trial_rng(5, 0).standard_normal(4)
    r2 = cfgmod.trial_rng(5, 0).standard_normal(4)
    r3 = cfgmod.trial_rng(5, 1).standard_normal(4)
    assert np.allclose(r1, r2)
    assert not np.allclose(r1, r3)
