import numpy as np
import pytest

from starhnoma import sca


def rand_vec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_quadratic_bound_tight_at_expansion():
    rng = np.random.default_rng(0)
    a, x = rand_vec(rng, 4), rand_vec(rng, 4)
    bound = sca.taylor_lb_quadratic(a, x)
    assert bound.value(x) == pytest.approx(abs(np.vdot(a, x)) ** 2, rel=1e-12)


def test_quadratic_bound_is_global():
    rng = np.random.default_rng(1)
    a, x_t = rand_vec(rng, 5), rand_vec(rng, 5)
    bound = sca.taylor_lb_quadratic(a, x_t)
    for _ in range(10_000):
        x = rand_vec(rng, 5)
        assert bound.value(x) <= abs(np.vdot(a, x)) ** 2 + 1e-12


def test_zero_vector_gives_zero_functional():
    rng = np.random.default_rng(2)
    bound = sca.taylor_lb_quadratic(np.zeros(3, dtype=complex), rand_vec(rng, 3))
    assert bound.value(rand_vec(rng, 3)) == 0.0


def test_ratio_bound_tight_at_expansion():
    rng = np.random.default_rng(3)
    a, x = rand_vec(rng, 4), rand_vec(rng, 4)
    bound = sca.taylor_lb_ratio(a, x, 2.5)
    assert bound.value(x, 2.5) == pytest.approx(abs(np.vdot(a, x)) ** 2 / 2.5, rel=1e-12)


def test_ratio_bound_is_global_on_positive_aux():
    rng = np.random.default_rng(4)
    a, x_t = rand_vec(rng, 4), rand_vec(rng, 4)
    bound = sca.taylor_lb_ratio(a, x_t, 1.7)
    for _ in range(10_000):
        x = rand_vec(rng, 4)
        aux = float(10.0 ** rng.uniform(-2, 2))
        assert bound.value(x, aux) <= abs(np.vdot(a, x)) ** 2 / aux + 1e-12


def test_ratio_bound_phase_invariance():
    rng = np.random.default_rng(5)
    a, x_t, x = rand_vec(rng, 4), rand_vec(rng, 4), rand_vec(rng, 4)
    theta = 0.9
    b1 = sca.taylor_lb_ratio(a, x_t, 1.0)
    b2 = sca.taylor_lb_ratio(a, x_t * np.exp(1j * theta), 1.0)
    assert b1.value(x, 1.3) == pytest.approx(b2.value(x * np.exp(1j * theta), 1.3), rel=1e-10)


def test_ratio_bound_rejects_nonpositive_aux():
    with pytest.raises(ValueError):
        sca.taylor_lb_ratio(np.ones(2, dtype=complex), np.ones(2, dtype=complex), 0.0)


def single_user_problem(a, w, p_max):
    return sca.ConvexSubproblem(
        dim=a.size,
        time_weights=np.array([1.0]),
        linear_lb=(),
        ratio_lb=(sca.RatioLbConstraint(a, 1.0, 0),),
        quad_ub=(sca.QuadUbConstraint(a, 0.0, 1.0, 0),),
        expansion_point=w,
        expansion_aux=np.array([1.0]),
        norm_bound=p_max,
    )


def test_single_user_reaches_matched_filter():
    rng = np.random.default_rng(6)
    s = rand_vec(rng, 4)
    a = np.conj(s)
    p_max = 2.0
    w = rand_vec(rng, 4)
    w *= np.sqrt(p_max) * 0.4 / np.linalg.norm(w)
    for _ in range(25):  # re-expansion loop
        rep = sca.solve(single_user_problem(a, w, p_max))
        w = rep.solution
    target = p_max * np.linalg.norm(s) ** 2
    assert abs(np.vdot(a, w)) ** 2 == pytest.approx(target, rel=1e-6)
    align = abs(np.vdot(w, np.conj(s))) / (np.linalg.norm(w) * np.linalg.norm(s))
    assert align >= 0.999
    assert np.linalg.norm(w) ** 2 == pytest.approx(p_max, rel=1e-6)


def test_degenerate_problem_returns_warm_start():
    # The ratio anchor is zero, pinning gamma at exactly 0: a single
    # feasible gamma means no improvement is possible.
    x_t = np.array([1.0 + 0j, 0.0 + 0j])
    a = np.array([0.0 + 0j, 1.0 + 0j])  # orthogonal to the expansion
    prob = single_user_problem(a, x_t, 4.0)
    rep = sca.solve(prob)
    assert rep.status == "optimal"
    assert rep.iterations == 0
    assert np.allclose(rep.solution, x_t)
    assert rep.objective == pytest.approx(0.0, abs=1e-12)


def test_dense_grid_matches_scalar_solve():
    # dim=1: maximize log2(1+gamma) with gamma <= |a|^2 |x|^2 / nu and
    # nu >= 1, |x|^2 <= P: optimum gamma = |a|^2 P.
    a = np.array([1.3 - 0.4j])
    p_max = 1.7
    x0 = np.array([0.3 + 0.2j])
    w = x0
    for _ in range(25):
        rep = sca.solve(single_user_problem(a, w, p_max))
        w = rep.solution
    best = np.log2(1.0 + abs(a[0]) ** 2 * p_max)
    assert rep.objective == pytest.approx(best, abs=1e-4)


def test_sampled_oracle_never_beats_solver():
    rng = np.random.default_rng(7)
    for _ in range(3):
        dim = 3
        a1, a2 = rand_vec(rng, dim), rand_vec(rng, dim)
        p_max = 1.5
        w = rand_vec(rng, dim)
        w *= np.sqrt(p_max) * 0.5 / np.linalg.norm(w)
        powers = np.array([0.7, 0.3])
        for _ in range(30):
            prob = sca.ConvexSubproblem(
                dim=dim,
                time_weights=np.array([1.0, 1.0]),
                linear_lb=(),
                ratio_lb=(
                    sca.RatioLbConstraint(a1, powers[0], 0),
                    sca.RatioLbConstraint(a2, powers[1], 1),
                ),
                quad_ub=(
                    sca.QuadUbConstraint(a1, powers[1], 1.0, 0),
                    sca.QuadUbConstraint(a2, 0.0, 1.0, 1),
                ),
                expansion_point=w,
                expansion_aux=np.array(
                    [powers[1] * abs(np.vdot(a1, w)) ** 2 + 1.0, 1.0]
                ),
                norm_bound=p_max,
            )
            rep = sca.solve(prob)
            w = rep.solution
        # independent sampling oracle on the true (non-convexified) objective
        best = 0.0
        for _ in range(4000):
            x = rand_vec(rng, dim)
            x *= np.sqrt(p_max) * rng.uniform() ** 0.5 / np.linalg.norm(x)
            g1 = abs(np.vdot(a1, x)) ** 2
            g2 = abs(np.vdot(a2, x)) ** 2
            val = np.log2(1 + g1 * powers[0] / (g1 * powers[1] + 1.0)) + np.log2(
                1 + g2 * powers[1]
            )
            best = max(best, val)
        true_val = np.log2(
            1
            + abs(np.vdot(a1, w)) ** 2 * powers[0] / (abs(np.vdot(a1, w)) ** 2 * powers[1] + 1.0)
        ) + np.log2(1 + abs(np.vdot(a2, w)) ** 2 * powers[1])
        assert true_val >= best - 1e-4 - 0.05 * abs(best)


def test_monotone_under_reexpansion():
    rng = np.random.default_rng(8)
    for _ in range(5):
        a = rand_vec(rng, 3)
        w = rand_vec(rng, 3)
        w *= 0.4 / np.linalg.norm(w)
        prev = -np.inf
        for _ in range(6):
            rep = sca.solve(single_user_problem(a, w, 1.0))
            assert rep.objective >= prev - 1e-6
            prev = rep.objective
            w = rep.solution


def test_solution_satisfies_constraints():
    rng = np.random.default_rng(9)
    a = rand_vec(rng, 4)
    w = rand_vec(rng, 4)
    w *= 0.5 / np.linalg.norm(w)
    prob = single_user_problem(a, w, 1.0)
    rep = sca.solve(prob)
    assert sca.check_constraints(prob, rep.solution, rep.gamma, rep.nu) <= 1e-7


def test_barrier_stage_objectives_nondecreasing():
    rng = np.random.default_rng(10)
    a = rand_vec(rng, 4)
    w = rand_vec(rng, 4)
    w *= 0.4 / np.linalg.norm(w)
    rep = sca.solve(single_user_problem(a, w, 1.0))
    vals = rep.outer_objectives
    assert len(vals) >= 1
    assert np.all(np.diff(vals) >= -1e-6)


def test_objective_never_below_warm_start():
    rng = np.random.default_rng(11)
    for _ in range(5):
        a = rand_vec(rng, 4)
        w = rand_vec(rng, 4)
        w *= 0.6 / np.linalg.norm(w)
        prob = single_user_problem(a, w, 1.0)
        warm_obj = np.log2(1.0 + abs(np.vdot(a, w)) ** 2)
        rep = sca.solve(prob)
        assert rep.objective >= warm_obj - 1e-9


def test_optimal_status_implies_small_certificate():
    rng = np.random.default_rng(12)
    a = rand_vec(rng, 4)
    w = rand_vec(rng, 4)
    w *= 0.6 / np.linalg.norm(w)
    rep = sca.solve(single_user_problem(a, w, 1.0))
    assert rep.status == "optimal"
    assert rep.kkt_residual <= sca.KKT_TOL
