"""Baseline evaluators sharing the optimized pipeline's components.

Five schemes, all consuming the same channel realization so paired
comparisons are exact:

* ``hnoma-star``  - the full pipeline (pairing, SCA beams/profiles,
  closed-form power/time allocation).
* ``oma-star``    - every user in its own sub-slot with a dedicated beam
  and profile; QoS-exact slots, remainder to the strongest user.
* ``noma-star``   - all clusters transmit over the full frame at once,
  which introduces cross-cluster interference; beams/profiles come from
  the same SCA machinery with that interference held at its expansion
  value, pairing and decoding orders are random, and the transmit budget
  is split evenly across the simultaneous beams.
* ``hnoma-ris``   - reflection-only surface: reflect amplitudes pinned to
  the top codebook value, transmit-side users attenuated a further 20 dB
  (sheet penetration); profiles co-phase per mode, clusters that cannot
  meet QoS are dropped and counted as unserved.
* ``rand-star``   - every design variable drawn uniformly from its
  feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ao
from .active_bf import optimize_active
from .channel import TRANSMIT, ChannelSet
from .config import SystemConfig
from .pairing import ClusterPlan, random_plan, single_user_plan
from .passive_bf import compose_user_rows, optimize_passive
from .rates import RateReport, beam_gains, evaluate, evaluate_from_gains
from .resource_alloc import (
    ResourcePlan,
    allocate_with_drops,
    power_split_case1,
    power_recursion_last_cluster,
    random_resource_plan,
    AllocationError,
)

PENETRATION_LOSS_DB = 20.0  # metal-backed sheet, transmit side


@dataclass
class SchemeResult:
    scheme: str
    sum_rate: float
    report: RateReport
    feasible: bool                  # all users served at their QoS floor
    diagnostics: dict = field(default_factory=dict)


def run_proposed(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    options: ao.AoOptions | None = None,
    plan: ClusterPlan | None = None,
) -> SchemeResult:
    trace = ao.run(cfg, channels, rng, options=options, plan=plan)
    final = trace.records[-1]
    return SchemeResult(
        scheme="hnoma-star",
        sum_rate=trace.sum_rate,
        report=trace.report,
        feasible=final.allocation_feasible,
        diagnostics={
            "iterations": trace.iterations,
            "status": trace.status,
            "unserved_users": final.unserved_users,
        },
    )


def run_oma_star(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    options: ao.AoOptions | None = None,
) -> SchemeResult:
    """Orthogonal sub-slots over the clustered designs.

    The beams and surface profiles come from the optimized pipeline; each
    user is then served alone (full power, no superposition) in its own
    sub-slot under its cluster's design.  Slots are QoS-exact and the
    strongest user absorbs the remainder.  Unservable users are shed
    largest-slot-first, exactly like the hybrid scheme's census.
    """
    trace = ao.run(cfg, channels, rng, options=options)
    rows = compose_user_rows(channels, trace.profiles, trace.plan)
    gains = beam_gains(rows, trace.plan, trace.beams.vectors)
    qos = np.asarray(cfg.qos_min_rates, dtype=float)
    sigma2 = cfg.noise_power
    k_total = channels.n_users

    snr = gains / sigma2
    rate_full = np.log2(1.0 + snr)
    best = int(np.argmax(gains))
    need = np.array(
        [
            qos[k] / rate_full[k] if rate_full[k] > 0.0 else np.inf
            for k in range(k_total)
        ]
    )
    unserved: list[int] = []
    while True:
        others = [k for k in range(k_total) if k != best and k not in unserved]
        total = float(np.sum(need[others]))
        if total < 1.0 and np.isfinite(total):
            break
        victim = max(others, key=lambda k: need[k])
        unserved.append(victim)
    times = np.zeros(k_total)
    for k in others:
        times[k] = need[k]
    times[best] = 1.0 - float(np.sum(times))

    plan = single_user_plan(k_total)
    per_user_beams = np.stack(
        [trace.beams.vectors[trace.plan.cluster_of(k)] for k in range(k_total)]
    )
    resources = ResourcePlan(powers=np.ones(k_total), times=times)
    report = evaluate(rows, plan, per_user_beams, resources, qos, sigma2)
    return SchemeResult(
        scheme="oma-star",
        sum_rate=report.sum_rate,
        report=report,
        feasible=not unserved and bool(np.all(report.qos_residuals > -1e-9)),
        diagnostics={
            "unserved_users": len(unserved),
            "pipeline_status": trace.status,
        },
    )


def _cross_interference(
    rows: np.ndarray, plan: ClusterPlan, beam_vectors: np.ndarray
) -> np.ndarray:
    """Per-user interference power from every other cluster's beam (each
    cluster's full unit power budget rides on its own beam)."""
    k_total = rows.shape[0]
    extra = np.zeros(k_total)
    for c, members in enumerate(plan.clusters):
        for k in members:
            for c2 in range(plan.n_clusters):
                if c2 != c:
                    extra[k] += abs(rows[k] @ beam_vectors[c2]) ** 2
    return extra


def _noma_star_powers(
    gains: np.ndarray,
    extra: np.ndarray,
    plan: ClusterPlan,
    qos: np.ndarray,
    noise_power: float,
) -> tuple[np.ndarray, bool]:
    """Within-cluster splits at full frame: the strongest-aggregate cluster
    puts its low-order user exactly at QoS, the others balance SINRs.
    Per-user effective noise folds the cross-cluster interference in."""
    k_total = gains.shape[0]
    powers = np.zeros(k_total)
    eff = np.asarray(
        [gains[k] / (noise_power + extra[k]) for k in range(k_total)]
    )
    strength = [float(np.sum(gains[list(m)])) for m in plan.clusters]
    best = int(np.argmax(strength))
    ok = True
    for c, members in enumerate(plan.clusters):
        if len(members) == 1:
            powers[list(members)] = 1.0
            continue
        first, last = members
        try:
            if c == best:
                powers[list(members)] = power_recursion_last_cluster(
                    eff[list(members)], 1.0, qos[list(members)], 1.0
                )
            elif eff[first] > 0.0 and eff[last] > 0.0:
                powers[first], powers[last] = power_split_case1(
                    eff[first], eff[last], 1.0
                )
            else:
                powers[first], powers[last] = 0.0, 1.0
                ok = False
        except AllocationError:
            powers[list(members)] = (0.0, 1.0)
            ok = False
    return powers, ok


def run_noma_star(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    order: str = "random",
    max_iterations: int = 30,
    threshold: float = 0.1,
) -> SchemeResult:
    """Simultaneous clusters over the full frame with cross-interference.

    Reconstruction notes: the transmit budget is split evenly over the
    simultaneous beams (one P_max per frame, not per beam), and the SCA
    stages treat each user's cross-cluster interference as extra fixed
    noise, re-measured every outer iteration.
    """
    n_clusters = cfg.n_clusters
    qos = np.asarray(cfg.qos_min_rates, dtype=float)
    sigma2 = cfg.noise_power
    p_beam = cfg.tx_power_max / n_clusters

    boot = ao._boot_profiles(n_clusters, channels.n_elements, 0.5)
    pre = random_plan(channels.user_state, rng)
    rows_boot = compose_user_rows(channels, boot, pre)
    plan = random_plan(channels.user_state, rng, channels=rows_boot, order=order)

    beams = ao.init_active(
        compose_user_rows(channels, boot, plan), plan, p_beam, rng
    )
    profiles = ao.init_passive(channels, plan, beams, 0.5)
    rows = compose_user_rows(channels, profiles, plan)
    times = np.ones(n_clusters)  # every cluster rides the whole frame
    gains = beam_gains(rows, plan, beams.vectors)
    extra = _cross_interference(rows, plan, beams.vectors)
    powers, ok = _noma_star_powers(gains, extra, plan, qos, sigma2)
    resources = ResourcePlan(powers=powers, times=times)
    report = evaluate_from_gains(gains, plan, resources, qos, sigma2, extra)
    prev = report.sum_rate

    for _ in range(max_iterations):
        beams, _ = optimize_active(
            rows, plan, beams, resources.powers, times, qos, sigma2, p_beam,
            extra_noise=extra,
        )
        profiles, _, _ = optimize_passive(
            channels, plan, beams, profiles, resources.powers, times, qos,
            sigma2, cfg.phase_bits, cfg.amplitude_bits,
            extra_noise=extra,
        )
        rows = compose_user_rows(channels, profiles, plan)
        gains = beam_gains(rows, plan, beams.vectors)
        extra = _cross_interference(rows, plan, beams.vectors)
        powers, ok = _noma_star_powers(gains, extra, plan, qos, sigma2)
        resources = ResourcePlan(powers=powers, times=times)
        report = evaluate_from_gains(gains, plan, resources, qos, sigma2, extra)
        if (report.sum_rate - prev) ** 2 <= threshold:
            prev = report.sum_rate
            break
        prev = report.sum_rate

    feasible = ok and bool(np.all(report.qos_residuals > -1e-9))
    return SchemeResult(
        scheme="noma-star",
        sum_rate=report.sum_rate,
        report=report,
        feasible=feasible,
        diagnostics={"mean_cross_interference": float(np.mean(extra))},
    )


def run_hnoma_ris(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
    max_iterations: int = 30,
    threshold: float = 0.1,
) -> SchemeResult:
    """Reflection-only surface with transmit-side penetration loss.

    Reflect amplitudes sit at the top codebook value 1 - eps (eps being
    one amplitude step), the tiny transmit remainder co-phases toward the
    transmit member; both are held fixed, so the profile stage reduces to
    co-phasing and only the beams run through the SCA solver.
    """
    eps = 1.0 / (2**cfg.amplitude_bits - 1)
    qos = np.asarray(cfg.qos_min_rates, dtype=float)
    sigma2 = cfg.noise_power

    att = 10.0 ** (-PENETRATION_LOSS_DB / 20.0)
    g = channels.surface_to_user.copy()
    g[channels.user_state == TRANSMIT] *= att
    ch = ChannelSet(
        channels.bs_to_surface, g, channels.user_state,
        channels.user_positions, channels.seed_key,
    )

    boot = ao._boot_profiles(cfg.n_clusters, ch.n_elements, 1.0 - eps)
    pre = random_plan(ch.user_state, rng)
    rows_boot = compose_user_rows(ch, boot, pre)
    plan = random_plan(ch.user_state, rng, channels=rows_boot, order="random")

    beams = ao.init_active(compose_user_rows(ch, boot, plan), plan, cfg.tx_power_max, rng)
    profiles = ao.init_passive(ch, plan, beams, 1.0 - eps, beta_transmit=eps)
    rows = compose_user_rows(ch, profiles, plan)
    resources, dropped = allocate_with_drops(rows, plan, beams.vectors, qos, sigma2)
    report = evaluate(rows, plan, beams.vectors, resources, qos, sigma2)
    prev = report.sum_rate

    for _ in range(max_iterations):
        beams, _ = optimize_active(
            rows, plan, beams, resources.powers, resources.times, qos, sigma2,
            cfg.tx_power_max,
        )
        profiles = ao.init_passive(ch, plan, beams, 1.0 - eps, beta_transmit=eps)
        rows = compose_user_rows(ch, profiles, plan)
        resources, dropped = allocate_with_drops(rows, plan, beams.vectors, qos, sigma2)
        report = evaluate(rows, plan, beams.vectors, resources, qos, sigma2)
        if (report.sum_rate - prev) ** 2 <= threshold:
            prev = report.sum_rate
            break
        prev = report.sum_rate

    return SchemeResult(
        scheme="hnoma-ris",
        sum_rate=report.sum_rate,
        report=report,
        feasible=not dropped,
        diagnostics={"unserved_users": len(dropped)},
    )


def run_rand_star(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: np.random.Generator,
) -> SchemeResult:
    """Everything drawn uniformly from its feasible set."""
    plan = random_plan(channels.user_state, rng, order="random")
    beams = ao.random_beams(
        plan.n_clusters, cfg.n_tx_antennas, cfg.tx_power_max, rng
    )
    profiles = ao.random_profiles(
        plan.n_clusters, channels.n_elements, cfg.phase_bits, cfg.amplitude_bits, rng
    )
    resources = random_resource_plan(plan, rng)
    rows = compose_user_rows(channels, profiles, plan)
    report = evaluate(rows, plan, beams.vectors, resources,
                      np.asarray(cfg.qos_min_rates), cfg.noise_power)
    return SchemeResult(
        scheme="rand-star",
        sum_rate=report.sum_rate,
        report=report,
        feasible=bool(np.all(report.qos_residuals > -1e-9)),
        diagnostics={},
    )


SCHEMES = {
    "hnoma-star": run_proposed,
    "oma-star": run_oma_star,
    "noma-star": run_noma_star,
    "hnoma-ris": run_hnoma_ris,
    "rand-star": run_rand_star,
}


def run_scheme(
    name: str, cfg: SystemConfig, channels: ChannelSet, rng: np.random.Generator
) -> SchemeResult:
    try:
        fn = SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}") from None
    return fn(cfg, channels, rng)
