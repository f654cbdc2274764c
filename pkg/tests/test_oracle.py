import numpy as np
import pytest

from starhnoma import oracle


def test_single_pair_matching():
    perm, val = oracle.brute_force_pairing(np.array([[3.0]]))
    assert list(perm) == [0] and val == 3.0


def test_two_by_two_enumerates_both_matchings():
    score = np.array([[1.0, 7.0], [2.0, 4.0]])
    _, val = oracle.brute_force_pairing(score)
    assert val == pytest.approx(max(1.0 + 4.0, 7.0 + 2.0))


def test_enumeration_orders_agree():
    rng = np.random.default_rng(0)
    for _ in range(6):
        score = rng.random((4, 4))
        _, a = oracle.brute_force_pairing(score, enumeration="lexicographic")
        _, b = oracle.brute_force_pairing(score, enumeration="dfs")
        assert a == pytest.approx(b, abs=1e-12)


def test_grid_recovers_matched_filter():
    rng = np.random.default_rng(1)
    h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    w, _ = oracle.grid_beamformer(h[None, :], np.array([1.0]), 1.0, 1.0, 4.0)
    mrt = np.conj(h) / np.linalg.norm(h)
    align = abs(np.vdot(w, mrt)) / np.linalg.norm(w)
    assert align >= 0.999


def test_grid_refinement_reduces_error():
    rng = np.random.default_rng(2)
    h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    best = 1.0 * np.log2(1 + 4.0 * np.linalg.norm(h) ** 2)  # matched filter bound
    _, coarse = oracle.grid_beamformer(h[None, :], np.array([1.0]), 1.0, 1.0, 4.0,
                                       n_alpha=9, n_phase=16)
    _, fine = oracle.grid_beamformer(h[None, :], np.array([1.0]), 1.0, 1.0, 4.0,
                                     n_alpha=17, n_phase=32)
    assert best - fine <= best - coarse + 1e-12
    assert best - fine <= 0.75 * (best - coarse) + 1e-9


def test_grid_upper_bounds_sampled_beams():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    powers = np.array([0.6, 0.4])
    _, best = oracle.grid_beamformer(rows, powers, 1.0, 1.0, 2.0)
    for _ in range(200):
        w = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        w *= np.sqrt(2.0) / np.linalg.norm(w)
        g = np.abs(rows @ w) ** 2
        r_w, r_s = oracle._pair_rates(g[0], g[1], powers[0], powers[1], 1.0, 1.0)
        assert best >= r_w + r_s - 0.05  # grid resolution allowance


def test_profile_enumeration_count():
    u_r, u_t = oracle._enumerate_profiles(1, 1, 1)
    # per element: 2 amplitudes x 2 reflect phases x 2 transmit phases
    assert u_r.shape == (8, 1) and u_t.shape == (8, 1)
    assert np.allclose(np.abs(u_r) + np.abs(u_t), 1.0)


def test_codebook_refinement_trend():
    rng = np.random.default_rng(4)
    eff = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
    rates = []
    for b1 in (1, 2, 3):
        _, rate = oracle.exhaustive_codebook_profiles(
            eff, np.array([0]), np.array([1.0]), 1.0, 1.0, b1, 2
        )
        rates.append(rate)
    assert rates[0] <= rates[1] + 1e-12 <= rates[2] + 2e-12


def test_bisection_known_root():
    root = oracle.numeric_root(lambda p: p * p * 9 + p * 6 - 3, 0.0, 1.0)
    assert root == pytest.approx(1.0 / 3.0, abs=1e-11)


def test_bisection_requires_sign_change():
    with pytest.raises(ValueError):
        oracle.numeric_root(lambda p: p + 1.0, 0.0, 1.0)


def test_quadratic_roots_match_scalar_bisection():
    rng = np.random.default_rng(5)
    gi = 10.0 ** rng.uniform(-2, 3, 50)
    gj = 10.0 ** rng.uniform(-2, 3, 50)
    s2 = 10.0 ** rng.uniform(-4, 1, 50)
    roots = oracle.quadratic_power_roots(gi, gj, s2)
    for a, b, c, r in zip(gi, gj, s2, roots):
        scalar = oracle.numeric_root(
            lambda p: p * p * a * b + p * c * (a + b) - c * a, 0.0, 1.0
        )
        assert r == pytest.approx(scalar, abs=1e-10)


def test_degenerate_weak_gain_gives_zero_root():
    root = oracle.numeric_root(lambda p: p * p * 0.0 + p * 2.0 - 0.0, 0.0, 1.0)
    assert root == 0.0


def test_tiny_search_feasibility_rules():
    rng = np.random.default_rng(6)
    H = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    out = oracle.exhaustive_tiny_search(
        H, g, np.array([0, 1]), np.array([0.1, 0.1]), 0.5, 2.0, 2, 2,
        n_alpha=12, n_phase=24,
    )
    assert np.isfinite(out["sum_rate"]) and out["sum_rate"] > 0
    u_r, u_t = out["profile"]
    assert np.allclose(np.abs(u_r) + np.abs(u_t), 1.0)
    assert abs(np.linalg.norm(out["w"]) ** 2 - 2.0) < 1e-9
