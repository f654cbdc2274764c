import numpy as np
import pytest
from dataclasses import replace

from starhnoma import config as cfgmod
from starhnoma.channel import (
    REFLECT,
    TRANSMIT,
    compose_end_to_end,
    dump_channels,
    load_channels,
    path_loss_db,
    synthesize_channels,
    upa_steering,
    user_link_steering,
)
from starhnoma.config import db_to_linear, make_config


def test_broadside_planar_response_is_flat():
    vec = upa_steering(0.0, 0.0, 2, 2)
    assert np.allclose(vec.entries, 0.5)


def test_vertical_endfire_phase_steps():
    vec = upa_steering(np.pi / 2, 0.0, 1, 2)  # single row, two z-elements
    expected = np.array([1.0, np.exp(1j * np.pi)]) / np.sqrt(2)
    assert np.allclose(vec.entries, expected, atol=1e-12)


def test_planar_response_matches_scalar_loop():
    rng = np.random.default_rng(3)
    for _ in range(10):
        el, az = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
        rows, cols = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        vec = upa_steering(el, az, rows, cols)
        direct = np.empty(rows * cols, dtype=complex)
        for mz in range(cols):
            for my in range(rows):
                phase = 2 * np.pi * 0.5 * (my * np.cos(el) * np.sin(az) + mz * np.sin(el))
                direct[my + rows * mz] = np.exp(1j * phase) / np.sqrt(rows * cols)
        assert np.allclose(vec.entries, direct, atol=1e-12)


def test_steering_vectors_unit_norm():
    rng = np.random.default_rng(4)
    for _ in range(20):
        el, az = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
        vec = upa_steering(el, az, 4, 4)
        assert np.linalg.norm(vec.entries) == pytest.approx(1.0, abs=1e-12)


def test_angle_range_enforced():
    with pytest.raises(ValueError):
        upa_steering(2.0, 0.0, 2, 2)


def test_user_link_steering_unit_magnitude():
    row = user_link_steering(0.3, -0.8, 16)
    assert np.allclose(np.abs(row), 1.0)


@pytest.mark.parametrize(
    "d,ref,exp,shadow,expected",
    [(1.0, 60.0, 2.2, 0.0, 60.0), (10.0, 60.0, 2.2, 0.0, 82.0), (100.0, 60.0, 2.8, 5.8, 121.8)],
)
def test_path_loss_points(d, ref, exp, shadow, expected):
    assert path_loss_db(d, ref, exp, shadow) == pytest.approx(expected, abs=1e-9)


def test_path_loss_needs_positive_distance():
    with pytest.raises(ValueError):
        path_loss_db(0.0, 60.0, 2.2)


def test_synthesis_is_deterministic(table_cfg):
    a = synthesize_channels(table_cfg, cfgmod.trial_rng(table_cfg.seed, 0))
    b = synthesize_channels(table_cfg, cfgmod.trial_rng(table_cfg.seed, 0))
    assert np.array_equal(a.bs_to_surface, b.bs_to_surface)
    assert np.array_equal(a.surface_to_user, b.surface_to_user)
    assert np.array_equal(a.user_positions, b.user_positions)
    assert np.array_equal(a.user_state, b.user_state)


def test_scatter_component_variance():
    # Per-entry variance of the non-LoS part should be 10^(-PL/10).
    cfg = make_config(
        seed=3, K=2, C=1, M=100, N=100, los_gain_mode="unit", shadowing_db=0.0
    )
    surf = np.asarray(cfg.surface_position)
    bs = np.asarray(cfg.bs_position)
    d = float(np.linalg.norm(surf - bs))
    pl = path_loss_db(d, cfg.pathloss_ref, cfg.pathloss_exp_bs_surface, 0.0)
    cfg_los = replace(cfg, include_nlos=False)
    samples = []
    for trial in range(12):
        rng = cfgmod.trial_rng(cfg.seed, trial)
        rng_los = cfgmod.trial_rng(cfg.seed, trial)
        full = synthesize_channels(cfg, rng).bs_to_surface
        los = synthesize_channels(cfg_los, rng_los).bs_to_surface
        samples.append((full - los).ravel())
    scatter = np.concatenate(samples)
    assert scatter.size >= 1e5
    var = float(np.mean(np.abs(scatter) ** 2))
    assert var == pytest.approx(db_to_linear(-pl), rel=0.02)


def test_los_only_magnitudes():
    cfg = make_config(seed=5, K=2, C=1, M=16, N=16,
                      los_gain_mode="unit", include_nlos=False, shadowing_db=0.0)
    ch = synthesize_channels(cfg, cfgmod.trial_rng(cfg.seed, 0))
    d = float(np.linalg.norm(np.asarray(cfg.surface_position) - np.asarray(cfg.bs_position)))
    pl = path_loss_db(d, cfg.pathloss_ref, cfg.pathloss_exp_bs_surface, 0.0)
    assert np.allclose(np.abs(ch.bs_to_surface), np.sqrt(db_to_linear(-pl)), rtol=1e-10)
    # surface->user rows carry the (deliberately un-normalized) array factor
    for k in range(cfg.n_users):
        d_u = float(np.linalg.norm(ch.user_positions[k] - np.asarray(cfg.surface_position)))
        pl_u = path_loss_db(d_u, cfg.pathloss_ref_surface_user, cfg.pathloss_exp_surface_user, 0.0)
        expect = np.sqrt(db_to_linear(-pl_u)) * np.sqrt(cfg.n_tx_antennas * cfg.n_surface_elements)
        assert np.allclose(np.abs(ch.surface_to_user[k]), expect, rtol=1e-10)


def test_mode_partition_follows_surface_plane(table_cfg):
    ch = synthesize_channels(table_cfg, cfgmod.trial_rng(table_cfg.seed, 1))
    surf_x = table_cfg.surface_position[0]
    for k in range(table_cfg.n_users):
        on_bs_side = ch.user_positions[k, 0] < surf_x  # BS sits at x=0 < 45
        assert ch.user_state[k] == (REFLECT if on_bs_side else TRANSMIT)
    assert set(np.unique(ch.user_state)).issubset({REFLECT, TRANSMIT})


def test_compose_identity_and_zero_profiles():
    g = np.array([2.0 + 1j])
    H = np.array([[3.0 - 1j, 1.0 + 0.5j]])
    out = compose_end_to_end(g, np.ones(1), H)
    assert np.allclose(out, np.conj(g[0]) * H[0])
    assert np.allclose(compose_end_to_end(g, np.zeros(1), H), 0.0)


def test_compose_matches_dense_diagonal_product():
    rng = np.random.default_rng(9)
    for _ in range(10):
        m, n = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        g = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        u = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        H = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        dense = np.conj(g) @ np.diag(u) @ H
        assert np.allclose(compose_end_to_end(g, u, H), dense, atol=1e-12)


def test_compose_linear_in_profile():
    rng = np.random.default_rng(10)
    m, n = 6, 5
    g = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    H = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    u1 = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    u2 = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    a, b = 0.7 - 0.2j, -1.1 + 0.4j
    lhs = compose_end_to_end(g, a * u1 + b * u2, H)
    rhs = a * compose_end_to_end(g, u1, H) + b * compose_end_to_end(g, u2, H)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose_end_to_end(np.ones(2), np.ones(3), np.ones((2, 4)))


def test_channel_dump_round_trip(tmp_path, channels4):
    path = tmp_path / "chan.npz"
    dump_channels(channels4, str(path), "cafe1234")
    loaded, header = load_channels(str(path))
    assert header["config_hash"] == "cafe1234"
    assert np.array_equal(loaded.bs_to_surface, channels4.bs_to_surface)
    assert np.array_equal(loaded.surface_to_user, channels4.surface_to_user)
