"""Convexified per-cluster subproblem: types, Taylor bounds, and solver.

Both beamforming stages reduce to the same shape of problem: maximize
sum_u t_u log2(1 + gamma_u) over a complex decision vector plus per-user
auxiliaries (gamma_u, nu_u), subject to

  * affine QoS rows built from first-order lower bounds of |a^H x|^2,
  * affine rows linking a lower bound of |a^H x|^2 / nu to gamma,
  * convex quadratic interference caps  scale*|a^H x|^2 + offset <= nu,
  * a transmit-power ball and/or per-element unit-disc couplings.

The solver is a hand-rolled log-barrier Newton method over the
real-ified decision space (Re/Im stacked); see _kernels for the hot
loop.  Expansion points come from the surrounding alternating
optimization, which keeps them feasible, and a slack-maximizing phase
is run first whenever the warm start touches a constraint boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

LN2 = float(np.log(2.0))

# Tolerances (solver-wide): the convexified problems carry no natural
# scale, so rows are normalized at assembly and these are absolute.
KKT_TOL = 1e-7
GAP_TOL = 1e-8
NEWTON_TOL = 1e-9
MU0 = 0.05   # warm starts from the surrounding AO sit near the optimum
MU_SHRINK = 0.1
MAX_OUTER = 50
MAX_INNER = 100
STRICT_SLACK = 1e-12
PHASE1_MARGIN = 1e-2
INFEAS_TOL = 1e-8
DEGENERATE_SLACK = 1e-7


@dataclass(frozen=True)
class AffineLowerBound:
    """x -> 2 Re(x~^H a a^H x) - |a^H x~|^2: affine global lower bound of
    |a^H x|^2, tight at the expansion point x~."""

    vec: np.ndarray       # a
    anchor: complex       # a^H x~

    def value(self, x: np.ndarray) -> float:
        return float(
            2.0 * np.real(np.conj(self.anchor) * np.vdot(self.vec, x))
            - abs(self.anchor) ** 2
        )


@dataclass(frozen=True)
class RatioLowerBound:
    """(x, aux) -> 2 Re(x~^H a a^H x)/aux~ - (|a^H x~|/aux~)^2 aux: lower
    bound of |a^H x|^2 / aux on aux > 0, tight at (x~, aux~)."""

    vec: np.ndarray
    anchor: complex
    aux_anchor: float

    def value(self, x: np.ndarray, aux: float) -> float:
        lead = 2.0 * np.real(np.conj(self.anchor) * np.vdot(self.vec, x))
        return float(lead / self.aux_anchor - (abs(self.anchor) / self.aux_anchor) ** 2 * aux)


def taylor_lb_quadratic(a: np.ndarray, x_tilde: np.ndarray) -> AffineLowerBound:
    """First-order lower bound of |a^H x|^2 around x_tilde."""
    return AffineLowerBound(np.asarray(a, dtype=complex), complex(np.vdot(a, x_tilde)))


def taylor_lb_ratio(a: np.ndarray, x_tilde: np.ndarray, aux_tilde: float) -> RatioLowerBound:
    """First-order lower bound of |a^H x|^2 / aux around (x_tilde, aux_tilde)."""
    if aux_tilde <= 0.0:
        raise ValueError("expansion auxiliary must be positive")
    return RatioLowerBound(
        np.asarray(a, dtype=complex), complex(np.vdot(a, x_tilde)), float(aux_tilde)
    )


@dataclass(frozen=True)
class LinearLbConstraint:
    """tau(x) * scale >= rhs with tau the affine bound around the expansion."""

    vec: np.ndarray
    scale: float
    rhs: float


@dataclass(frozen=True)
class RatioLbConstraint:
    """tau(x, nu_user) * scale >= gamma_user."""

    vec: np.ndarray
    scale: float
    user: int


@dataclass(frozen=True)
class QuadUbConstraint:
    """scale * |a^H x|^2 + offset <= nu_user (affine when scale == 0)."""

    vec: np.ndarray
    scale: float
    offset: float
    user: int


@dataclass(frozen=True)
class ConvexSubproblem:
    dim: int                                   # complex decision length
    time_weights: np.ndarray                   # t_u per tracked user
    linear_lb: tuple[LinearLbConstraint, ...]
    ratio_lb: tuple[RatioLbConstraint, ...]
    quad_ub: tuple[QuadUbConstraint, ...]
    expansion_point: np.ndarray                # complex (dim,)
    expansion_aux: np.ndarray                  # nu~ per user, positive
    norm_bound: float | None = None            # ||x||^2 <= bound
    coupling_pairs: tuple[tuple[int, int], ...] = ()  # |x_i|^2 + |x_j|^2 <= 1

    @property
    def n_users(self) -> int:
        return len(self.time_weights)


@dataclass
class SolverReport:
    solution: np.ndarray            # complex decision vector
    gamma: np.ndarray               # per-user auxiliaries
    nu: np.ndarray
    objective: float                # sum_u t_u log2(1 + gamma_u), bits/s/Hz
    status: str                     # optimal | max_iter | infeasible
    iterations: int
    kkt_residual: float
    outer_objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diagnostics: dict = field(default_factory=dict)


def _realify(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """u, v with Re(a^H x) = u . xr and Im(a^H x) = v . xr for xr = [Re x; Im x]."""
    ar, ai = np.real(a), np.imag(a)
    return np.concatenate([ar, ai]), np.concatenate([-ai, ar])


def _row_scale(*parts: float) -> float:
    s = max(abs(p) for p in parts)
    return s if s > 0.0 else 1.0


class _Assembly:
    """Flat kernel arrays for one subproblem, with variable index maps."""

    def __init__(self, prob: ConvexSubproblem):
        dim, n_users = prob.dim, prob.n_users
        self.nx = 2 * dim
        self.n_users = n_users
        self.nz = self.nx + 2 * n_users
        self.ig = self.nx                       # gamma block offset
        self.inu = self.nx + n_users            # nu block offset

        x_t = prob.expansion_point
        nu_t = np.asarray(prob.expansion_aux, dtype=float)
        if np.any(nu_t <= 0.0):
            raise ValueError("expansion auxiliaries must be positive")

        aff_rows: list[np.ndarray] = []
        aff_consts: list[float] = []
        self.infeasible_row = False

        def add_aff(row, const):
            s = _row_scale(float(np.max(np.abs(row))), const)
            if float(np.max(np.abs(row))) == 0.0:
                if const < 0.0:
                    self.infeasible_row = True
                return
            aff_rows.append(row / s)
            aff_consts.append(const / s)

        for con in prob.linear_lb:
            u, v = _realify(con.vec)
            c0 = complex(np.vdot(con.vec, x_t))
            row = np.zeros(self.nz)
            row[: self.nx] = 2.0 * con.scale * (c0.real * u + c0.imag * v)
            const = -con.scale * abs(c0) ** 2 - con.rhs
            add_aff(row, const)

        for con in prob.ratio_lb:
            u, v = _realify(con.vec)
            c0 = complex(np.vdot(con.vec, x_t))
            nt = nu_t[con.user]
            row = np.zeros(self.nz)
            row[: self.nx] = (2.0 * con.scale / nt) * (c0.real * u + c0.imag * v)
            row[self.inu + con.user] = -con.scale * (abs(c0) / nt) ** 2
            row[self.ig + con.user] = -1.0
            add_aff(row, 0.0)

        for u_idx in range(n_users):
            row = np.zeros(self.nz)
            row[self.ig + u_idx] = 1.0
            add_aff(row, 0.0)  # gamma >= 0

        rq_u, rq_v, rq_s, rq_c, rq_e = [], [], [], [], []
        for con in prob.quad_ub:
            if con.scale == 0.0:
                row = np.zeros(self.nz)
                row[self.inu + con.user] = 1.0
                add_aff(row, -con.offset)
                continue
            u, v = _realify(con.vec)
            cu = np.zeros(self.nz)
            cu[: self.nx] = u
            cv = np.zeros(self.nz)
            cv[: self.nx] = v
            cc = np.zeros(self.nz)
            cc[self.inu + con.user] = -1.0
            anchor = abs(np.vdot(con.vec, x_t)) ** 2
            s = _row_scale(con.scale * max(anchor, 1.0), con.offset, 1.0)
            rq_u.append(cu)
            rq_v.append(cv)
            rq_s.append(con.scale / s)
            rq_c.append(cc / s)
            rq_e.append(con.offset / s)

        dq_d, dq_c, dq_e, dq_sup = [], [], [], []
        if prob.norm_bound is not None:
            d = np.zeros(self.nz)
            d[: self.nx] = 1.0
            s = _row_scale(prob.norm_bound, 1.0)
            dq_d.append(d / s)
            dq_c.append(np.zeros(self.nz))
            dq_e.append(-prob.norm_bound / s)
            dq_sup.append(list(range(self.nx)))
        for (i, j) in prob.coupling_pairs:
            d = np.zeros(self.nz)
            sup = [i, dim + i, j, dim + j]  # Re/Im coordinates of both entries
            for t in sup:
                d[t] = 1.0
            dq_d.append(d)
            dq_c.append(np.zeros(self.nz))
            dq_e.append(-1.0)
            dq_sup.append(sup)

        self.A = np.array(aff_rows) if aff_rows else np.zeros((0, self.nz))
        self.b = np.array(aff_consts) if aff_consts else np.zeros(0)
        self.rq_u = np.array(rq_u) if rq_u else np.zeros((0, self.nz))
        self.rq_v = np.array(rq_v) if rq_v else np.zeros((0, self.nz))
        self.rq_s = np.array(rq_s) if rq_s else np.zeros(0)
        self.rq_c = np.array(rq_c) if rq_c else np.zeros((0, self.nz))
        self.rq_e = np.array(rq_e) if rq_e else np.zeros(0)
        self.dq_d = np.array(dq_d) if dq_d else np.zeros((0, self.nz))
        self.dq_c = np.array(dq_c) if dq_c else np.zeros((0, self.nz))
        self.dq_e = np.array(dq_e) if dq_e else np.zeros(0)
        if dq_sup:
            width = max(len(s) for s in dq_sup)
            self.dq_sup = np.zeros((len(dq_sup), width), dtype=np.int64)
            self.dq_nsup = np.zeros(len(dq_sup), dtype=np.int64)
            for r, s in enumerate(dq_sup):
                self.dq_sup[r, : len(s)] = s
                self.dq_nsup[r] = len(s)
        else:
            self.dq_sup = np.zeros((0, 1), dtype=np.int64)
            self.dq_nsup = np.zeros(0, dtype=np.int64)

        self.obj_idx = (self.ig + np.arange(n_users)).astype(np.int64)
        self.obj_w = np.asarray(prob.time_weights, dtype=float) / LN2
        self.obj_lin = np.zeros(self.nz)

    def pack_x(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([np.real(x), np.imag(x)])

    def unpack(self, z: np.ndarray):
        x = z[: self.nx // 2] + 1j * z[self.nx // 2 : self.nx]
        gamma = z[self.ig : self.ig + self.n_users].copy()
        nu = z[self.inu : self.inu + self.n_users].copy()
        return x, gamma, nu

    def min_slack(self, z: np.ndarray) -> float:
        saff, srq, sdq = _kernels._eval_slacks(
            z, self.A, self.b, self.rq_u, self.rq_v, self.rq_s, self.rq_c,
            self.rq_e, self.dq_d, self.dq_c, self.dq_e,
        )
        vals = np.concatenate([saff, srq, sdq])
        return float(np.min(vals)) if vals.size else np.inf


def _initial_point(asm: _Assembly, prob: ConvexSubproblem, x0: np.ndarray) -> np.ndarray:
    """Warm start: x as given, nu slightly above its cap, gamma slightly
    inside its ratio bound.  May still touch other boundaries; the
    feasibility phase then takes over."""
    z = np.zeros(asm.nz)
    z[: asm.nx] = asm.pack_x(x0)
    nu0 = np.asarray(prob.expansion_aux, dtype=float).copy()
    for con in prob.quad_ub:
        val = con.scale * abs(np.vdot(con.vec, x0)) ** 2 + con.offset
        nu0[con.user] = max(nu0[con.user], val) * (1.0 + 1e-6) + 1e-12
    z[asm.inu : asm.inu + asm.n_users] = nu0
    for con in prob.ratio_lb:
        bound = taylor_lb_ratio(
            con.vec, prob.expansion_point, prob.expansion_aux[con.user]
        )
        cap = con.scale * bound.value(x0, nu0[con.user])
        z[asm.ig + con.user] = max(0.0, 0.9 * cap)
    return z


def _run_phase1(asm: _Assembly, z0: np.ndarray):
    """Maximize the common slack; returns (interior z or None, max slack)."""
    nz = asm.nz + 1
    si = asm.nz
    pad = lambda m: np.hstack([m, np.zeros((m.shape[0], 1))]) if m.size else np.zeros((0, nz))

    A = pad(asm.A)
    if A.shape[0]:
        A[:, si] = -1.0
    cap_row = np.zeros(nz)
    cap_row[si] = -1.0
    A = np.vstack([A, cap_row])
    b = np.concatenate([asm.b, [2.0 * PHASE1_MARGIN]])
    rq_c = pad(asm.rq_c)
    if rq_c.shape[0]:
        rq_c[:, si] = 1.0
    dq_c = pad(asm.dq_c)
    if dq_c.shape[0]:
        dq_c[:, si] = 1.0
    dq_sup = np.hstack([asm.dq_sup, np.full((asm.dq_sup.shape[0], 1), si, dtype=np.int64)])
    dq_nsup = asm.dq_nsup + 1

    obj_lin = np.zeros(nz)
    obj_lin[si] = 1.0
    z = np.concatenate([z0, [0.0]])
    start = asm.min_slack(z0)
    z[si] = start - max(0.5, abs(start))

    zf, status, _, _, _, _ = _kernels.barrier_minimize(
        z,
        np.zeros(0, dtype=np.int64),
        np.zeros(0),
        obj_lin,
        A,
        b,
        pad(asm.rq_u),
        pad(asm.rq_v),
        asm.rq_s,
        rq_c,
        asm.rq_e,
        pad(asm.dq_d),
        dq_c,
        asm.dq_e,
        dq_sup,
        dq_nsup,
        MU0,
        MU_SHRINK,
        GAP_TOL,
        NEWTON_TOL,
        MAX_OUTER,
        MAX_INNER,
        si,
        PHASE1_MARGIN,
    )
    slack = float(zf[si])
    return zf[: asm.nz], slack


def check_constraints(prob: ConvexSubproblem, x: np.ndarray, gamma: np.ndarray, nu: np.ndarray) -> float:
    """Max violation of the subproblem constraints at a candidate point."""
    worst = 0.0
    for con in prob.linear_lb:
        tau = taylor_lb_quadratic(con.vec, prob.expansion_point)
        worst = max(worst, con.rhs - con.scale * tau.value(x))
    for con in prob.ratio_lb:
        tau = taylor_lb_ratio(con.vec, prob.expansion_point, prob.expansion_aux[con.user])
        worst = max(worst, gamma[con.user] - con.scale * tau.value(x, nu[con.user]))
    for con in prob.quad_ub:
        val = con.scale * abs(np.vdot(con.vec, x)) ** 2 + con.offset
        worst = max(worst, val - nu[con.user])
    if prob.norm_bound is not None:
        worst = max(worst, float(np.real(np.vdot(x, x))) - prob.norm_bound)
    for (i, j) in prob.coupling_pairs:
        worst = max(worst, abs(x[i]) ** 2 + abs(x[j]) ** 2 - 1.0)
    return float(worst)


def objective_bits(prob: ConvexSubproblem, gamma: np.ndarray) -> float:
    return float(np.sum(np.asarray(prob.time_weights) * np.log2(1.0 + np.maximum(gamma, 0.0))))


def solve(prob: ConvexSubproblem, warm_start: np.ndarray | None = None) -> SolverReport:
    """Solve one convexified subproblem to barrier tolerance.

    The expansion point doubles as the warm start unless one is given.
    Never raises on infeasibility: the report's status says what happened
    and the solution falls back to the warm start.
    """
    asm = _Assembly(prob)
    x0 = prob.expansion_point if warm_start is None else np.asarray(warm_start, dtype=complex)

    def warm_report(status: str, note: str) -> SolverReport:
        z = _initial_point(asm, prob, x0)
        x, gamma, nu = asm.unpack(z)
        return SolverReport(
            solution=x0.copy(),
            gamma=gamma,
            nu=nu,
            objective=objective_bits(prob, gamma),
            status=status,
            iterations=0,
            kkt_residual=0.0,
            diagnostics={"note": note},
        )

    if asm.infeasible_row:
        return warm_report("infeasible", "constant constraint row violated")

    z0 = _initial_point(asm, prob, x0)
    diagnostics: dict = {}
    if asm.min_slack(z0) < STRICT_SLACK:
        z0, slack = _run_phase1(asm, z0)
        diagnostics["phase1_slack"] = slack
        if slack < -INFEAS_TOL:
            return warm_report("infeasible", "feasibility phase failed")
        if slack < DEGENERATE_SLACK:
            # Feasible set is (numerically) a single point: keep the warm start.
            return warm_report("optimal", "degenerate feasible set")

    z, status_code, steps, kkt, outer_vals, n_outer = _kernels.barrier_minimize(
        z0,
        asm.obj_idx,
        asm.obj_w,
        asm.obj_lin,
        asm.A,
        asm.b,
        asm.rq_u,
        asm.rq_v,
        asm.rq_s,
        asm.rq_c,
        asm.rq_e,
        asm.dq_d,
        asm.dq_c,
        asm.dq_e,
        asm.dq_sup,
        asm.dq_nsup,
        MU0,
        MU_SHRINK,
        GAP_TOL,
        NEWTON_TOL,
        MAX_OUTER,
        MAX_INNER,
        -1,
        0.0,
    )
    x, gamma, nu = asm.unpack(z)
    status = "optimal" if status_code == _kernels.STATUS_OPTIMAL else "max_iter"
    violation = check_constraints(prob, x, gamma, nu)
    diagnostics["max_violation"] = violation
    return SolverReport(
        solution=x,
        gamma=gamma,
        nu=nu,
        objective=objective_bits(prob, gamma),
        status=status,
        iterations=int(steps),
        kkt_residual=float(kkt),
        outer_objectives=outer_vals[:n_outer].copy(),
        diagnostics=diagnostics,
    )
