"""Alternating optimization driver: beams, profiles, channel update,
power/time allocation, with feasible initialization and convergence control.

One iteration runs the beamformer pass, the profile pass with codebook
projection, recomposes the end-to-end channels, and re-allocates power
and time.  The loop stops when the squared sum-rate change drops below
the threshold or the iteration cap is hit.

Pairing runs once, before the loop, on channels composed with the
co-phased initial profiles of a random provisional pairing (the
provisional step exists only to give the initializer clusters to work
with).  Ablation switches replace any of the four blocks (pairing,
beams, profiles, resources) with feasible random draws.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .active_bf import BeamformerSet, optimize_active
from .channel import REFLECT, TRANSMIT, ChannelSet
from .config import SystemConfig
from .pairing import ClusterPlan, plan_clusters, random_plan
from .passive_bf import (
    SurfaceProfileSet,
    amplitude_codebook,
    compose_user_rows,
    effective_element_channels,
    optimize_passive,
    phase_codebook,
)
from .rates import RateReport, evaluate
from .resource_alloc import (
    AllocationError,
    ResourcePlan,
    allocate_all,
    allocate_with_drops,
    random_resource_plan,
)


@dataclass(frozen=True)
class AoOptions:
    convergence_threshold: float = 0.1   # on |R_i - R_{i-1}|^2
    max_iterations: int = 30
    quantize_each_iteration: bool = True
    beta0: float = 0.5                   # initial reflect amplitude
    pairing: str = "correlation"         # or "random"
    optimize_beams: bool = True
    optimize_profiles: bool = True
    optimize_resources: bool = True


@dataclass
class IterationRecord:
    index: int
    sum_rate: float
    sca_sum_rate: float        # continuous-profile sum rate, pre-projection
    quantization_gap: float    # sca_sum_rate minus the iteration's final rate
    allocation_feasible: bool  # every user served at QoS this iteration
    unserved_users: list
    active_statuses: list
    passive_statuses: list
    min_qos_residual: float
    wall_time: float

    def to_mapping(self) -> dict:
        return asdict(self)


@dataclass
class AoTrace:
    records: list[IterationRecord]
    status: str                         # converged | max_iter | infeasible
    plan: ClusterPlan
    beams: BeamformerSet
    profiles: SurfaceProfileSet
    resources: ResourcePlan
    report: RateReport
    sum_rate: float

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_mapping()) for r in self.records]
        lines.append(json.dumps({"status": self.status, "sum_rate": self.sum_rate}))
        return "\n".join(lines) + "\n"


def init_active(
    composed_rows: np.ndarray,
    plan: ClusterPlan,
    p_max: float,
    rng: np.random.Generator | None = None,
) -> BeamformerSet:
    """Matched-filter start: each cluster's beam points at its strongest
    member's conjugated channel, scaled onto the power sphere."""
    n_t = composed_rows.shape[1]
    vectors = np.empty((plan.n_clusters, n_t), dtype=complex)
    for c, members in enumerate(plan.clusters):
        norms = [float(np.linalg.norm(composed_rows[k])) for k in members]
        best = members[int(np.argmax(norms))]
        nrm = np.linalg.norm(composed_rows[best])
        if nrm == 0.0:
            if rng is None:
                rng = np.random.default_rng(0)
            v = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
            vectors[c] = v / np.linalg.norm(v) * np.sqrt(p_max)
        else:
            vectors[c] = np.conj(composed_rows[best]) / nrm * np.sqrt(p_max)
    return BeamformerSet(vectors)


def init_passive(
    channels: ChannelSet,
    plan: ClusterPlan,
    beams: BeamformerSet,
    beta0: float = 0.5,
    beta_transmit: float | None = None,
) -> SurfaceProfileSet:
    """Co-phased start: each element cancels the phase of the effective
    channel of the strongest cluster member served in that mode;
    amplitudes split beta0 / 1-beta0 (or an explicit transmit amplitude).
    Modes without a member co-phase against the strongest member overall
    (harmless)."""
    m = channels.n_elements
    amp_t = 1.0 - beta0 if beta_transmit is None else beta_transmit
    reflect = np.empty((plan.n_clusters, m), dtype=complex)
    transmit = np.empty((plan.n_clusters, m), dtype=complex)
    for c, members in enumerate(plan.clusters):
        effective = {
            k: effective_element_channels(channels, beams.vectors[c], k)
            for k in members
        }
        strength = {k: float(np.sum(np.abs(d))) for k, d in effective.items()}
        for state, out, amp in (
            (REFLECT, reflect, beta0),
            (TRANSMIT, transmit, amp_t),
        ):
            candidates = [k for k in members if int(channels.user_state[k]) == state]
            if not candidates:
                candidates = list(members)
            target = max(candidates, key=lambda k: (strength[k], -k))
            d = effective[target]
            phase = np.where(np.abs(d) > 0.0, -np.angle(d), 0.0)
            out[c] = amp * np.exp(1j * phase)
    return SurfaceProfileSet(reflect, transmit)


def _boot_profiles(n_clusters: int, m: int, beta0: float) -> SurfaceProfileSet:
    ones = np.ones((n_clusters, m), dtype=complex)
    return SurfaceProfileSet(beta0 * ones, (1.0 - beta0) * ones)


def random_beams(n_clusters: int, n_t: int, p_max: float, rng: np.random.Generator) -> BeamformerSet:
    v = rng.standard_normal((n_clusters, n_t)) + 1j * rng.standard_normal((n_clusters, n_t))
    v *= (np.sqrt(p_max) / np.linalg.norm(v, axis=1))[:, None]
    return BeamformerSet(v)


def random_profiles(
    n_clusters: int,
    m: int,
    phase_bits: int,
    amplitude_bits: int,
    rng: np.random.Generator,
) -> SurfaceProfileSet:
    """Uniform draws from the discrete feasible set, amplitude-tied."""
    psi = phase_codebook(phase_bits)
    omega = amplitude_codebook(amplitude_bits)
    beta_r = rng.choice(omega, size=(n_clusters, m))
    th_r = rng.choice(psi, size=(n_clusters, m))
    th_t = rng.choice(psi, size=(n_clusters, m))
    return SurfaceProfileSet(
        beta_r * np.exp(1j * th_r), (1.0 - beta_r) * np.exp(1j * th_t)
    )


def initialize(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    options: AoOptions,
    plan: ClusterPlan | None = None,
):
    """Pairing plus feasible starting point (see module docstring)."""
    states = channels.user_state
    if plan is None:
        pre_plan = random_plan(states, rng)
        boot = _boot_profiles(pre_plan.n_clusters, channels.n_elements, options.beta0)
        rows_boot = compose_user_rows(channels, boot, pre_plan)
        w_pre = init_active(rows_boot, pre_plan, cfg.tx_power_max, rng)
        profiles_pre = init_passive(channels, pre_plan, w_pre, options.beta0)
        rows_init = compose_user_rows(channels, profiles_pre, pre_plan)
        if options.pairing == "correlation":
            plan = plan_clusters(rows_init, states)
        else:
            plan = random_plan(states, rng, channels=rows_init, order="strength")
    else:
        boot = _boot_profiles(plan.n_clusters, channels.n_elements, options.beta0)
        rows_init = compose_user_rows(channels, boot, plan)

    if options.optimize_beams:
        beams = init_active(rows_init, plan, cfg.tx_power_max, rng)
    else:
        beams = random_beams(plan.n_clusters, cfg.n_tx_antennas, cfg.tx_power_max, rng)
    if options.optimize_profiles:
        profiles = init_passive(channels, plan, beams, options.beta0)
    else:
        profiles = random_profiles(
            plan.n_clusters, channels.n_elements, cfg.phase_bits, cfg.amplitude_bits, rng
        )
    # Feasible resource start: the closed-form allocation on the initial
    # state (best effort), or uniform draws when the resource block is
    # under ablation.
    resources = random_resource_plan(plan, rng)
    if options.optimize_resources:
        rows0 = compose_user_rows(channels, profiles, plan)
        resources, _ = allocate_with_drops(
            rows0, plan, beams.vectors, np.asarray(cfg.qos_min_rates), cfg.noise_power
        )
    return plan, beams, profiles, resources


def run(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    options: AoOptions | None = None,
    plan: ClusterPlan | None = None,
) -> AoTrace:
    """Full alternating-optimization run on one channel realization.

    Deterministic given (cfg, channels, rng state).  An explicit plan
    skips pairing (the schemes and ablations use this).
    """
    options = options or AoOptions()
    qos = np.asarray(cfg.qos_min_rates, dtype=float)
    sigma2 = cfg.noise_power
    plan, beams, profiles, resources = initialize(cfg, channels, rng, options, plan)
    rows = compose_user_rows(channels, profiles, plan)
    profiles_cont = profiles  # previous continuous solution (expansion rescue)

    report = evaluate(rows, plan, beams.vectors, resources, qos, sigma2)
    prev_rate = report.sum_rate
    records: list[IterationRecord] = []
    any_feasible = False
    status = "max_iter"

    for it in range(1, options.max_iterations + 1):
        t0 = time.perf_counter()
        active_statuses: list = []
        passive_statuses: list = []

        if options.optimize_beams:
            beams, adiag = optimize_active(
                rows, plan, beams, resources.powers, resources.times, qos,
                sigma2, cfg.tx_power_max,
            )
            active_statuses = adiag["statuses"]

        if options.optimize_profiles:
            profiles, profiles_cont, pdiag = optimize_passive(
                channels, plan, beams, profiles, resources.powers, resources.times,
                qos, sigma2, cfg.phase_bits, cfg.amplitude_bits,
                quantize=options.quantize_each_iteration,
                rescue_expansion=profiles_cont,
            )
            passive_statuses = pdiag["statuses"]
            rows_cont = compose_user_rows(channels, profiles_cont, plan)
        else:
            rows_cont = rows

        sca_rate = evaluate(
            rows_cont, plan, beams.vectors, resources, qos, sigma2
        ).sum_rate
        rows = compose_user_rows(channels, profiles, plan)

        dropped: tuple[int, ...] = ()
        if options.optimize_resources:
            resources, dropped = allocate_with_drops(
                rows, plan, beams.vectors, qos, sigma2
            )
            if not dropped:
                any_feasible = True

        report = evaluate(rows, plan, beams.vectors, resources, qos, sigma2)
        records.append(
            IterationRecord(
                index=it,
                sum_rate=report.sum_rate,
                sca_sum_rate=sca_rate,
                quantization_gap=max(0.0, sca_rate - report.sum_rate),
                allocation_feasible=not dropped,
                unserved_users=list(dropped),
                active_statuses=active_statuses,
                passive_statuses=passive_statuses,
                min_qos_residual=float(np.min(report.qos_residuals)),
                wall_time=time.perf_counter() - t0,
            )
        )
        if (report.sum_rate - prev_rate) ** 2 <= options.convergence_threshold:
            status = "converged"
            prev_rate = report.sum_rate
            break
        prev_rate = report.sum_rate

    if (
        options.optimize_resources
        and records
        and len(records[-1].unserved_users) == channels.n_users
    ):
        status = "infeasible"
    return AoTrace(
        records=records,
        status=status,
        plan=plan,
        beams=beams,
        profiles=profiles,
        resources=resources,
        report=report,
        sum_rate=prev_rate,
    )
