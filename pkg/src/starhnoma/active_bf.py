"""Per-cluster transmit beamformer update via the convexified subproblem.

Clusters share the frame by TDMA, so there is no inter-cluster
interference and the beamformer subproblem separates cluster by
cluster: each solve sees only its own users' composed channels, power
coefficients, time fraction, and QoS floors, plus the transmit power
ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sca
from .pairing import ClusterPlan


@dataclass(frozen=True)
class BeamformerSet:
    """One transmit vector per cluster; each obeys the power ball."""

    vectors: np.ndarray  # complex (C, N_t)

    def power_ok(self, p_max: float, tol: float = 1e-9) -> bool:
        norms = np.einsum("cn,cn->c", self.vectors, np.conj(self.vectors)).real
        return bool(np.all(norms <= p_max + tol))


# QoS rows are enforced a hair inside their boundary so a QoS-exact warm
# start stays strictly interior; the allocator owns exactness.
QOS_RELAX = 1e-6


def qos_to_snr(rate: float, time_frac: float = 1.0) -> float:
    """Minimum-rate floor (bits/s/Hz) to the SINR needed in a slot of the
    given fraction: 2^(R/t) - 1 (the plain 2^R - 1 at a full frame)."""
    if rate <= 0.0:
        return 0.0
    if time_frac <= 0.0:
        raise ValueError("slot fraction must be positive for a positive rate")
    return float(2.0 ** (rate / time_frac) - 1.0)


def build_active_subproblem(
    s_rows: np.ndarray,
    powers: np.ndarray,
    time_frac: float,
    qos_rates: np.ndarray,
    noise_power: float,
    p_max: float,
    expansion_w: np.ndarray,
    extra_noise: np.ndarray | None = None,
) -> tuple[sca.ConvexSubproblem, dict]:
    """Assemble one cluster's beamformer subproblem around expansion_w.

    ``s_rows`` holds the users' composed channel rows ordered by decoding
    position (decoded-first first).  Channels are noise-normalized here so
    the auxiliaries read directly as SINRs; ``extra_noise`` adds per-user
    cross-cluster interference power (held fixed) into that normalization.
    Users whose power margin rho = p - r_min * interference is nonpositive
    lose their QoS row (the next allocation step restores it); zero-gain
    users are untracked and keep rate zero.  Diagnostics list both.
    """
    s_rows = np.asarray(s_rows, dtype=complex)
    n_users, dim = s_rows.shape
    denom = np.full(n_users, noise_power)
    if extra_noise is not None:
        denom = denom + np.asarray(extra_noise, dtype=float)
    diagnostics: dict = {"dropped_qos": [], "untracked": []}

    time_weights = []
    linear_lb: list[sca.LinearLbConstraint] = []
    ratio_lb: list[sca.RatioLbConstraint] = []
    quad_ub: list[sca.QuadUbConstraint] = []
    nu_tilde = []
    user_map = []

    for u in range(n_users):
        a = np.conj(s_rows[u]) / np.sqrt(denom[u])
        gain_t = abs(np.vdot(a, expansion_w)) ** 2
        interference = float(np.sum(powers[u + 1 :]))
        r_min = qos_to_snr(qos_rates[u], time_frac)
        if np.linalg.norm(a) == 0.0:
            # Dead composed row: no beam can serve this user, so its QoS row
            # is vacuous here; the profile stage owns reviving it.
            diagnostics["untracked"].append(u)
            continue
        idx = len(user_map)
        user_map.append(u)
        time_weights.append(time_frac)
        ratio_lb.append(sca.RatioLbConstraint(a, float(powers[u]), idx))
        quad_ub.append(sca.QuadUbConstraint(a, interference, 1.0, idx))
        nu_tilde.append(interference * gain_t + 1.0)
        if r_min > 0.0:
            rho = float(powers[u]) - r_min * interference
            if rho <= 0.0:
                diagnostics["dropped_qos"].append(u)
            else:
                linear_lb.append(
                    sca.LinearLbConstraint(a, rho, r_min * (1.0 - QOS_RELAX))
                )

    prob = sca.ConvexSubproblem(
        dim=dim,
        time_weights=np.asarray(time_weights),
        linear_lb=tuple(linear_lb),
        ratio_lb=tuple(ratio_lb),
        quad_ub=tuple(quad_ub),
        expansion_point=np.asarray(expansion_w, dtype=complex),
        expansion_aux=np.asarray(nu_tilde),
        norm_bound=float(p_max),
    )
    diagnostics["user_map"] = user_map
    return prob, diagnostics


def optimize_active(
    composed_rows: np.ndarray,
    plan: ClusterPlan,
    beams: BeamformerSet,
    powers: np.ndarray,
    times: np.ndarray,
    qos: np.ndarray,
    noise_power: float,
    p_max: float,
    extra_noise: np.ndarray | None = None,
) -> tuple[BeamformerSet, dict]:
    """One beamformer pass over all clusters, expanding at the current set.

    Infeasible or degenerate cluster solves keep their previous vector;
    the per-cluster solver statuses come back in the diagnostics.
    """
    vectors = beams.vectors.copy()
    statuses = []
    surrogate_gammas: dict[int, float] = {}
    for c, members in enumerate(plan.clusters):
        idx = list(members)
        extra = None if extra_noise is None else extra_noise[idx]
        # Zero-time clusters still get a solve (they may earn a slot back
        # next allocation); a nominal fair-share slot sets their QoS floor.
        t_eff = float(times[c]) if times[c] > 1e-9 else 1.0 / plan.n_clusters
        prob, diag = build_active_subproblem(
            composed_rows[idx],
            powers[idx],
            t_eff,
            qos[idx],
            noise_power,
            p_max,
            vectors[c],
            extra_noise=extra,
        )
        report = sca.solve(prob)
        if report.status == "infeasible":
            # Best-effort retry without QoS rows (see the profile stage).
            prob, diag = build_active_subproblem(
                composed_rows[idx],
                powers[idx],
                t_eff,
                np.zeros(len(idx)),
                noise_power,
                p_max,
                vectors[c],
                extra_noise=extra,
            )
            report = sca.solve(prob)
            if report.status != "infeasible":
                report.status = "qos_dropped"
        statuses.append(report.status)
        if report.status in ("optimal", "max_iter", "qos_dropped"):
            vectors[c] = report.solution
            for local, user in enumerate(diag["user_map"]):
                surrogate_gammas[idx[user]] = float(report.gamma[local])
    new_beams = BeamformerSet(vectors)
    if not new_beams.power_ok(p_max):
        raise RuntimeError("beamformer power ball violated after solve")
    return new_beams, {"statuses": statuses, "surrogate_gammas": surrogate_gammas}
