"""Surface profile optimization: continuous solve, then codebook projection.

The reflect and transmit rows of one cluster are optimized jointly as a
stacked decision vector.  The amplitude tie beta_r + beta_t = 1 is
relaxed per element to the convex disc |u_r|^2 + |u_t|^2 <= 1 (which
contains the tie exactly), and the projection onto the discrete phase
and amplitude codebooks restores the tie afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sca
from .active_bf import QOS_RELAX, qos_to_snr
from .channel import REFLECT, compose_end_to_end
from .pairing import ClusterPlan


@dataclass(frozen=True)
class SurfaceProfileSet:
    """Per-cluster surface coefficient rows u = amplitude * exp(j phase)."""

    reflect: np.ndarray   # complex (C, M)
    transmit: np.ndarray  # complex (C, M)

    def row(self, cluster: int, state: int) -> np.ndarray:
        return self.reflect[cluster] if state == REFLECT else self.transmit[cluster]

    @property
    def n_clusters(self) -> int:
        return self.reflect.shape[0]

    def amplitude_tie_ok(self, tol: float = 1e-12) -> bool:
        s = np.abs(self.reflect) + np.abs(self.transmit)
        return bool(np.all(np.abs(s - 1.0) <= tol))


def phase_codebook(bits: int) -> np.ndarray:
    n = 2**bits
    return 2.0 * np.pi * np.arange(n) / n


def amplitude_codebook(bits: int) -> np.ndarray:
    n = 2**bits
    return np.arange(n) / (n - 1)


def compose_user_rows(channels, profiles: SurfaceProfileSet, plan: ClusterPlan) -> np.ndarray:
    """End-to-end row per user under its own cluster's profile and mode."""
    rows = np.empty((channels.n_users, channels.n_antennas), dtype=complex)
    for c, members in enumerate(plan.clusters):
        for k in members:
            rows[k] = compose_end_to_end(
                channels.surface_to_user[k],
                profiles.row(c, int(channels.user_state[k])),
                channels.bs_to_surface,
            )
    return rows


def effective_element_channels(channels, beam: np.ndarray, user: int) -> np.ndarray:
    """Per-element channel diag(g^H) H w seen by one user for a fixed beam."""
    return np.conj(channels.surface_to_user[user]) * (channels.bs_to_surface @ beam)


def build_passive_subproblem(
    effective: np.ndarray,
    states: np.ndarray,
    powers: np.ndarray,
    time_frac: float,
    qos_rates: np.ndarray,
    noise_power: float,
    expansion_reflect: np.ndarray,
    expansion_transmit: np.ndarray,
    extra_noise: np.ndarray | None = None,
) -> tuple[sca.ConvexSubproblem, dict]:
    """Assemble one cluster's profile subproblem over x = [u_r ; u_t].

    ``effective[u]`` is user u's per-element channel for the current beam,
    rows ordered by decoding position.  Channels are noise-normalized
    (per user, including any fixed cross-cluster interference power);
    QoS rows with nonpositive power margin are dropped with a diagnostic,
    exactly as in the beamformer stage.
    """
    effective = np.asarray(effective, dtype=complex)
    n_users, m = effective.shape
    denom = np.full(n_users, noise_power)
    if extra_noise is not None:
        denom = denom + np.asarray(extra_noise, dtype=float)
    x_tilde = np.concatenate([expansion_reflect, expansion_transmit]).astype(complex)
    diagnostics: dict = {"dropped_qos": [], "untracked": []}

    time_weights = []
    linear_lb: list[sca.LinearLbConstraint] = []
    ratio_lb: list[sca.RatioLbConstraint] = []
    quad_ub: list[sca.QuadUbConstraint] = []
    nu_tilde = []
    user_map = []

    for u in range(n_users):
        a = np.zeros(2 * m, dtype=complex)
        offset = 0 if states[u] == REFLECT else m
        a[offset : offset + m] = np.conj(effective[u]) / np.sqrt(denom[u])
        gain_t = abs(np.vdot(a, x_tilde)) ** 2
        interference = float(np.sum(powers[u + 1 :]))
        r_min = qos_to_snr(qos_rates[u], time_frac)
        if np.linalg.norm(a) == 0.0:
            # Zero element channel: the rate is zero under any profile.
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
        dim=2 * m,
        time_weights=np.asarray(time_weights),
        linear_lb=tuple(linear_lb),
        ratio_lb=tuple(ratio_lb),
        quad_ub=tuple(quad_ub),
        expansion_point=x_tilde,
        expansion_aux=np.asarray(nu_tilde),
        coupling_pairs=tuple((i, m + i) for i in range(m)),
    )
    diagnostics["user_map"] = user_map
    return prob, diagnostics


def quantize_profile(
    reflect_row: np.ndarray, transmit_row: np.ndarray, phase_bits: int, amplitude_bits: int
) -> tuple[np.ndarray, np.ndarray]:
    """Project a continuous profile onto the discrete codebooks.

    Phases snap to the nearest codebook entry in circular distance, per
    mode independently.  Amplitudes: the reflect side snaps to the
    nearest codebook value, the transmit side takes the complement
    1 - beta_r (itself a codebook value, the grid being uniform on
    [0, 1]), which restores the exact amplitude tie.
    """
    psi = phase_codebook(phase_bits)
    omega = amplitude_codebook(amplitude_bits)

    def snap_phase(angles: np.ndarray) -> np.ndarray:
        diff = np.angle(np.exp(1j * (angles[:, None] - psi[None, :])))
        return psi[np.argmin(np.abs(diff), axis=1)]

    beta_r = omega[np.argmin(np.abs(np.abs(reflect_row)[:, None] - omega[None, :]), axis=1)]
    beta_t = 1.0 - beta_r
    th_r = snap_phase(np.angle(reflect_row))
    th_t = snap_phase(np.angle(transmit_row))
    return beta_r * np.exp(1j * th_r), beta_t * np.exp(1j * th_t)


def optimize_passive(
    channels,
    plan: ClusterPlan,
    beams,
    profiles: SurfaceProfileSet,
    powers: np.ndarray,
    times: np.ndarray,
    qos: np.ndarray,
    noise_power: float,
    phase_bits: int,
    amplitude_bits: int,
    quantize: bool = True,
    rescue_expansion: SurfaceProfileSet | None = None,
    extra_noise: np.ndarray | None = None,
) -> tuple[SurfaceProfileSet, SurfaceProfileSet, dict]:
    """One profile pass over all clusters.

    Returns (quantized profiles, continuous profiles, diagnostics); with
    ``quantize=False`` both are the continuous solution.  Infeasible
    solves keep the previous cluster profile.

    Expansion is the current (projected) profile.  When the projection
    has zeroed a served user's row, the first-order bound around it is
    degenerate there, so the cluster falls back to ``rescue_expansion``
    (the previous continuous solution) if one is supplied.
    """
    m = channels.n_elements
    reflect_c = profiles.reflect.copy()
    transmit_c = profiles.transmit.copy()
    statuses = []
    for c, members in enumerate(plan.clusters):
        idx = list(members)
        extra = None if extra_noise is None else extra_noise[idx]
        t_eff = float(times[c]) if times[c] > 1e-9 else 1.0 / plan.n_clusters
        effective = np.stack(
            [effective_element_channels(channels, beams.vectors[c], k) for k in idx]
        )
        exp_r, exp_t = reflect_c[c], transmit_c[c]
        if rescue_expansion is not None:
            for pos, k in enumerate(idx):
                row = exp_r if channels.user_state[k] == REFLECT else exp_t
                alive = abs(np.dot(effective[pos], row)) > 0.0
                has_channel = np.linalg.norm(effective[pos]) > 0.0
                if has_channel and not alive:
                    exp_r = rescue_expansion.reflect[c]
                    exp_t = rescue_expansion.transmit[c]
                    break
        prob, diag = build_passive_subproblem(
            effective,
            channels.user_state[idx],
            powers[idx],
            t_eff,
            qos[idx],
            noise_power,
            exp_r,
            exp_t,
            extra_noise=extra,
        )
        report = sca.solve(prob)
        if report.status == "infeasible":
            # Best-effort retry without QoS rows: a bad expansion anchor can
            # fail to certify a floor that the allocation step will restore.
            prob, diag = build_passive_subproblem(
                effective,
                channels.user_state[idx],
                powers[idx],
                t_eff,
                np.zeros(len(idx)),
                noise_power,
                exp_r,
                exp_t,
                extra_noise=extra,
            )
            report = sca.solve(prob)
            if report.status != "infeasible":
                report.status = "qos_dropped"
        statuses.append(report.status)
        if report.status in ("optimal", "max_iter", "qos_dropped"):
            reflect_c[c] = report.solution[:m]
            transmit_c[c] = report.solution[m:]
    continuous = SurfaceProfileSet(reflect_c, transmit_c)
    if not quantize:
        return continuous, continuous, {"statuses": statuses}
    reflect_q = np.empty_like(reflect_c)
    transmit_q = np.empty_like(transmit_c)
    for c in range(plan.n_clusters):
        # The relaxed disc admits amplitude pairs whose sum exceeds 1; pull
        # those back onto the amplitude-tie hull first, otherwise the
        # codebook tie would crush the smaller side.
        over = np.maximum(1.0, np.abs(reflect_c[c]) + np.abs(transmit_c[c]))
        reflect_q[c], transmit_q[c] = quantize_profile(
            reflect_c[c] / over, transmit_c[c] / over, phase_bits, amplitude_bits
        )
    return SurfaceProfileSet(reflect_q, transmit_q), continuous, {"statuses": statuses}
