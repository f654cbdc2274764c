"""Hot numeric kernel: a log-barrier Newton loop over small dense problems.

The solver is written once in njit-compatible numpy.  By default it is
compiled with numba; setting ``STARHNOMA_BACKEND=numpy`` (or ``python``)
selects the uncompiled pure-numpy path, which produces the same results
and serves both as a fallback and as the baseline for the backend
benchmark.

Problem form (all arrays float64, ``z`` of length nz):

    maximize   sum_g obj_w[g] * ln(1 + z[obj_idx[g]]) + obj_lin . z
    subject to A z + b >= 0                                       (affine rows)
               s_r (u_r.z)^2 + s_r (v_r.z)^2 + c_r.z + e_r <= 0   (rank-one quads)
               sum_t d_r[t] z[t]^2 + c_r.z + e_r <= 0             (diagonal quads)

Diagonal quads carry support index lists so sparse rows (per-element
unit-disc couplings, norm balls) cost O(support^2) in the Hessian, not
O(nz^2).
"""

from __future__ import annotations

import os

import numpy as np

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1
STATUS_STALL = 2


def _select_backend() -> str:
    choice = os.environ.get("STARHNOMA_BACKEND", "auto").strip().lower()
    if choice in ("numpy", "python", "nojit"):
        return "numpy"
    if choice in ("auto", "", "numba"):
        try:
            import numba  # noqa: F401

            return "numba"
        except ImportError:
            if choice == "numba":
                raise
            return "numpy"
    raise ValueError(f"unknown STARHNOMA_BACKEND value: {choice!r}")


BACKEND = _select_backend()


def _maybe_jit(fn):
    if BACKEND == "numba":
        import numba

        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


@_maybe_jit
def _eval_slacks(z, A, b, rq_u, rq_v, rq_s, rq_c, rq_e, dq_d, dq_c, dq_e):
    if A.shape[0] > 0:
        saff = A @ z + b
    else:
        saff = np.empty(0)
    if rq_u.shape[0] > 0:
        t1 = rq_u @ z
        t2 = rq_v @ z
        srq = -(rq_s * (t1 * t1 + t2 * t2) + rq_c @ z + rq_e)
    else:
        srq = np.empty(0)
    if dq_d.shape[0] > 0:
        sdq = -(dq_d @ (z * z) + dq_c @ z + dq_e)
    else:
        sdq = np.empty(0)
    return saff, srq, sdq


@_maybe_jit
def _phi_value(z, mu, obj_idx, obj_w, obj_lin, saff, srq, sdq):
    """Barrier potential (to minimize); +inf outside the strict interior."""
    val = 0.0
    for g in range(obj_idx.size):
        zi = z[obj_idx[g]]
        if zi <= -1.0:
            return np.inf
        val -= obj_w[g] * np.log(1.0 + zi)
    val -= obj_lin @ z
    if saff.size > 0:
        if np.any(saff <= 0.0):
            return np.inf
        val -= mu * np.sum(np.log(saff))
    if srq.size > 0:
        if np.any(srq <= 0.0):
            return np.inf
        val -= mu * np.sum(np.log(srq))
    if sdq.size > 0:
        if np.any(sdq <= 0.0):
            return np.inf
        val -= mu * np.sum(np.log(sdq))
    return val


@_maybe_jit
def _objective_value(z, obj_idx, obj_w, obj_lin):
    val = obj_lin @ z
    for g in range(obj_idx.size):
        val += obj_w[g] * np.log(1.0 + z[obj_idx[g]])
    return val


@_maybe_jit
def barrier_minimize(
    z0,
    obj_idx,
    obj_w,
    obj_lin,
    A,
    b,
    rq_u,
    rq_v,
    rq_s,
    rq_c,
    rq_e,
    dq_d,
    dq_c,
    dq_e,
    dq_sup,
    dq_nsup,
    mu0,
    mu_shrink,
    gap_tol,
    newton_tol,
    max_outer,
    max_inner,
    stop_idx,
    stop_target,
):
    """Barrier path follower.

    Returns (z, status, newton steps, kkt residual, per-stage objective
    values, stage count).  ``stop_idx >= 0`` enables early exit once
    ``z[stop_idx] >= stop_target`` (used by the feasibility phase).  The
    start point must be strictly interior.
    """
    nz = z0.size
    z = z0.copy()
    na = A.shape[0]
    nrq = rq_u.shape[0]
    ndq = dq_d.shape[0]
    m_total = na + nrq + ndq

    outer_vals = np.zeros(max_outer)
    mu = mu0
    newton_total = 0
    status = STATUS_MAX_ITER
    n_outer = 0
    last_dec = 0.0
    done = False

    for _outer in range(max_outer):
        # Loose centering early, tight once the gap is nearly closed.
        stage_tol = newton_tol if m_total * mu <= 10.0 * gap_tol else max(
            newton_tol, 1e-4 * mu
        )
        for _inner in range(max_inner):
            saff, srq, sdq = _eval_slacks(
                z, A, b, rq_u, rq_v, rq_s, rq_c, rq_e, dq_d, dq_c, dq_e
            )
            grad = -obj_lin.copy()
            hess = np.zeros((nz, nz))
            for g in range(obj_idx.size):
                zi = z[obj_idx[g]]
                grad[obj_idx[g]] -= obj_w[g] / (1.0 + zi)
                hess[obj_idx[g], obj_idx[g]] += obj_w[g] / ((1.0 + zi) * (1.0 + zi))
            if na > 0:
                w1 = mu / saff
                w2 = w1 / saff
                grad -= A.T @ w1
                hess += (A * w2.reshape(na, 1)).T @ A
            if nrq > 0:
                t1 = rq_u @ z
                t2 = rq_v @ z
                gq = (
                    2.0 * rq_s.reshape(nrq, 1)
                    * (t1.reshape(nrq, 1) * rq_u + t2.reshape(nrq, 1) * rq_v)
                    + rq_c
                )
                w1 = mu / srq
                w2 = w1 / srq
                grad += gq.T @ w1
                hess += (gq * w2.reshape(nrq, 1)).T @ gq
                uv = np.empty((2, nz))
                for r in range(nrq):
                    cs = 2.0 * rq_s[r] * w1[r]
                    if cs != 0.0:
                        uv[0, :] = rq_u[r]
                        uv[1, :] = rq_v[r]
                        hess += cs * (uv.T @ uv)
            for r in range(ndq):
                c1 = mu / sdq[r]
                c2 = c1 / sdq[r]
                ns = dq_nsup[r]
                for ia in range(ns):
                    ta = dq_sup[r, ia]
                    ga = 2.0 * dq_d[r, ta] * z[ta] + dq_c[r, ta]
                    grad[ta] += c1 * ga
                    hess[ta, ta] += c1 * 2.0 * dq_d[r, ta]
                    coef = c2 * ga
                    for ib in range(ns):
                        tb = dq_sup[r, ib]
                        hess[ta, tb] += coef * (2.0 * dq_d[r, tb] * z[tb] + dq_c[r, tb])

            # Damped Newton step; tiny ridge guards against exact singularity.
            tr = np.trace(hess)
            ridge = 1e-12 * (1.0 + tr / nz)
            for t in range(nz):
                hess[t, t] += ridge
            step = np.linalg.solve(hess, -grad)
            slope = grad @ step
            if slope > 0.0:  # numerical breakdown; treat the stage as converged
                last_dec = 0.0
                break
            last_dec = -slope
            if 0.5 * last_dec <= stage_tol:
                break

            phi0 = _phi_value(z, mu, obj_idx, obj_w, obj_lin, saff, srq, sdq)
            alpha = 1.0
            accepted = False
            for _ls in range(60):
                znew = z + alpha * step
                saff_n, srq_n, sdq_n = _eval_slacks(
                    znew, A, b, rq_u, rq_v, rq_s, rq_c, rq_e, dq_d, dq_c, dq_e
                )
                phi_n = _phi_value(
                    znew, mu, obj_idx, obj_w, obj_lin, saff_n, srq_n, sdq_n
                )
                if phi_n <= phi0 + 0.25 * alpha * slope:
                    z = znew
                    accepted = True
                    break
                alpha *= 0.5
            newton_total += 1
            if not accepted:
                status = STATUS_STALL
                done = True
                break
            if stop_idx >= 0 and z[stop_idx] >= stop_target:
                status = STATUS_OPTIMAL
                done = True
                break
        outer_vals[n_outer] = _objective_value(z, obj_idx, obj_w, obj_lin)
        n_outer += 1
        if done:
            break
        if m_total * mu <= gap_tol:
            status = STATUS_OPTIMAL
            break
        mu *= mu_shrink

    # Optimality certificate: barrier gap (m*mu) plus the Newton-decrement
    # bound on the remaining centering error, in objective units.
    kkt = m_total * mu + max(0.0, 0.5 * last_dec)
    return z, status, newton_total, kkt, outer_vals, n_outer


def warmup() -> None:
    """Trigger JIT compilation on a toy instance (cached on disk)."""
    nz = 3
    z0 = np.array([0.0, 0.5, 1.5])
    obj_idx = np.array([1], dtype=np.int64)
    obj_w = np.array([1.0])
    obj_lin = np.zeros(nz)
    A = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
    b = np.array([0.0, 2.0, 0.0])
    rq_u = np.zeros((1, nz))
    rq_u[0, 0] = 1.0
    rq_v = np.zeros((1, nz))
    rq_s = np.array([1.0])
    rq_c = np.zeros((1, nz))
    rq_e = np.array([-4.0])
    dq_d = np.zeros((1, nz))
    dq_d[0, 2] = 1.0
    dq_c = np.zeros((1, nz))
    dq_e = np.array([-9.0])
    dq_sup = np.array([[2, 0, 0]], dtype=np.int64)
    dq_nsup = np.array([1], dtype=np.int64)
    barrier_minimize(
        z0, obj_idx, obj_w, obj_lin, A, b, rq_u, rq_v, rq_s, rq_c, rq_e,
        dq_d, dq_c, dq_e, dq_sup, dq_nsup,
        1.0, 0.1, 1e-9, 1e-9, 30, 50, -1, 0.0,
    )
