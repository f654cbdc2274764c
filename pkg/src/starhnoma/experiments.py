"""Named experiment families reproducing the headline figure studies.

Each family returns tidy rows (one dict per measurement) plus an
aggregated summary; plotting is out of scope, the rows feed any tool.
All randomness flows through per-trial child generators of the config
seed, so re-running any family reproduces it byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import ao
from .channel import REFLECT, TRANSMIT, synthesize_channels
from .config import SystemConfig, split_rng
from .pairing import plan_clusters, random_plan, single_user_plan
from .passive_bf import SurfaceProfileSet, compose_user_rows
from .rates import evaluate
from .resource_alloc import AllocationError, ResourcePlan, allocate_all
from .schemes import SCHEMES, run_scheme

EXPERIMENT_NAMES = (
    "convergence",
    "scheme_vs_M",
    "pairing_gain_vs_C",
    "clusters_vs_qos",
    "contribution_ablation",
    "es_ratio_contour",
    "sr_vs_M_vs_Nt",
)


def mean_ci(values) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    half = 1.96 * arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else 0.0
    return float(arr.mean()), float(half)


def _group_summary(rows, keys, value="sum_rate"):
    groups: dict = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row[value])
    out = []
    for key, vals in sorted(groups.items()):
        m, ci = mean_ci(vals)
        entry = dict(zip(keys, key))
        entry.update({"mean": m, "ci95": ci, "n": len(vals)})
        out.append(entry)
    return out


def _convergence_trial(args):
    cfg, trial = args
    rng_ch, rng_ao = split_rng(cfg.seed, trial, 2)
    channels = synthesize_channels(cfg, rng_ch)
    trace = ao.run(cfg, channels, rng_ao)
    quasi_ok = all(
        rec.sca_sum_rate
        >= (trace.records[i - 1].sum_rate if i > 0 else 0.0) - 1e-6
        for i, rec in enumerate(trace.records)
    )
    return {
        "trial": trial,
        "iterations": trace.iterations,
        "converged": trace.status == "converged",
        "sum_rate": trace.sum_rate,
        "quasi_monotone": quasi_ok,
    }


def _scheme_trial(args):
    cfg, trial, scheme_names = args
    rngs = split_rng(cfg.seed, trial, 1 + len(scheme_names))
    channels = synthesize_channels(cfg, rngs[0])
    rows = []
    for i, name in enumerate(scheme_names):
        result = run_scheme(name, cfg, channels, rngs[1 + i])
        rows.append(
            {
                "trial": trial,
                "n_surface_elements": cfg.n_surface_elements,
                "scheme": name,
                "sum_rate": result.sum_rate,
                "feasible": result.feasible,
                "min_qos_residual": float(np.min(result.report.qos_residuals)),
            }
        )
    return rows


def _pairing_trial(args):
    cfg, trial, beam_modes = args
    rngs = split_rng(cfg.seed, trial, 5)
    channels = synthesize_channels(cfg, rngs[0])
    boot = ao._boot_profiles(cfg.n_users, channels.n_elements, 0.5)
    rows_boot = compose_user_rows(channels, boot, single_user_plan(cfg.n_users))
    out = []
    for mode in beam_modes:
        opts = {
            "optimized": ao.AoOptions(),
            "random": ao.AoOptions(optimize_beams=False, optimize_profiles=False),
            "active_only": ao.AoOptions(optimize_profiles=False),
        }[mode]
        r_alg = ao.run(cfg, channels, rngs[1], options=opts).sum_rate
        plan_rand = random_plan(
            channels.user_state, rngs[2], channels=rows_boot, order="strength"
        )
        r_rand = ao.run(cfg, channels, rngs[2], options=opts, plan=plan_rand).sum_rate
        plan_ro = random_plan(channels.user_state, rngs[3], order="random")
        r_rand_order = ao.run(cfg, channels, rngs[3], options=opts, plan=plan_ro).sum_rate
        out.append(
            {
                "trial": trial,
                "n_clusters": cfg.n_clusters,
                "beam_mode": mode,
                "sum_rate_algorithm": r_alg,
                "sum_rate_random_pairing": r_rand,
                "sum_rate_random_pairing_order": r_rand_order,
                "gain": r_alg - r_rand,
                "gain_vs_random_order": r_alg - r_rand_order,
            }
        )
    return out


def _state_ordered_plan(channels, pairs):
    """Pairs as (transmit, reflect): reflect side decoded last."""
    clusters = []
    order = {}
    for a, b in pairs:
        if int(channels.user_state[a]) == REFLECT and int(channels.user_state[b]) == TRANSMIT:
            a, b = b, a
        clusters.append((a, b))
        order[a] = 1
        order[b] = 2
    from .pairing import ClusterPlan

    return ClusterPlan(
        clusters=tuple(clusters),
        decoding_order=order,
        strong_group=tuple(c[1] for c in clusters),
        weak_group=tuple(c[0] for c in clusters),
    )


def _clusters_trial(args):
    cfg_full, trial, qos_grid, modes, es_ratios, max_clusters = args
    rngs = split_rng(cfg_full.seed, trial, 4)
    channels_full = synthesize_channels(cfg_full, rngs[0])
    out = []

    def slice_channels(n_users):
        from .channel import ChannelSet

        return ChannelSet(
            channels_full.bs_to_surface,
            channels_full.surface_to_user[:n_users],
            channels_full.user_state[:n_users],
            channels_full.user_positions[:n_users],
            channels_full.seed_key,
        )

    for qos in qos_grid:
        for mode in modes:
            ratios = es_ratios if mode == "random" else [None]
            for ratio in ratios:
                supported = 0
                for c_try in range(1, max_clusters + 1):
                    k = 2 * c_try
                    cfg = replace(
                        cfg_full,
                        n_users=k,
                        n_clusters=c_try,
                        qos_min_rates=(qos,) * k,
                    )
                    ch = slice_channels(k)
                    rng = split_rng(cfg_full.seed, trial, 4 + c_try)[-1]
                    if mode == "optimized":
                        trace = ao.run(cfg, ch, rng, ao.AoOptions(max_iterations=6))
                        feasible = trace.records[-1].allocation_feasible
                    else:
                        beta_r = ratio / (1.0 + ratio)
                        plan = plan_clusters(
                            compose_user_rows(
                                ch, ao._boot_profiles(c_try, ch.n_elements, beta_r),
                                _state_ordered_plan(ch, [(2 * i, 2 * i + 1) for i in range(c_try)]),
                            ),
                            ch.user_state,
                        )
                        beams = ao.random_beams(c_try, cfg.n_tx_antennas, cfg.tx_power_max, rng)
                        profiles = ao.random_profiles(
                            c_try, ch.n_elements, cfg.phase_bits, cfg.amplitude_bits, rng
                        )
                        amp = np.abs(profiles.reflect)
                        profiles = SurfaceProfileSet(
                            beta_r * np.exp(1j * np.angle(profiles.reflect)),
                            (1.0 - beta_r) * np.exp(1j * np.angle(profiles.transmit)),
                        )
                        rows = compose_user_rows(ch, profiles, plan)
                        try:
                            allocate_all(
                                rows, plan, beams.vectors,
                                np.asarray(cfg.qos_min_rates), cfg.noise_power,
                            )
                            feasible = True
                        except AllocationError:
                            feasible = False
                    if feasible:
                        supported = c_try
                    else:
                        break
                out.append(
                    {
                        "trial": trial,
                        "qos": qos,
                        "mode": mode if ratio is None else f"{mode}_es{ratio}",
                        "supported_clusters": supported,
                    }
                )
    return out


ABLATION_VARIANTS = ("all_random", "w_only", "u_only", "w_and_u", "full")


def _ablation_trial(args):
    cfg, trial = args
    rngs = split_rng(cfg.seed, trial, 6)
    channels = synthesize_channels(cfg, rngs[0])
    out = []
    for i, variant in enumerate(ABLATION_VARIANTS):
        rng = rngs[1 + i]
        if variant == "full":
            trace = ao.run(cfg, channels, rng)
        else:
            opts = ao.AoOptions(
                optimize_beams=variant in ("w_only", "w_and_u"),
                optimize_profiles=variant in ("u_only", "w_and_u"),
                optimize_resources=False,
            )
            plan = random_plan(channels.user_state, rng, order="random")
            trace = ao.run(cfg, channels, rng, options=opts, plan=plan)
        out.append(
            {
                "trial": trial,
                "n_surface_elements": cfg.n_surface_elements,
                "variant": variant,
                "sum_rate": trace.sum_rate,
            }
        )
    return out


def _es_contour_trial(args):
    cfg, trial, ratios, power_shares = args
    # Resample until the two users straddle the surface (one per mode).
    channels = None
    for attempt in range(64):
        rng_ch = split_rng(cfg.seed, trial, 2 + attempt)[-1]
        cand = synthesize_channels(cfg, rng_ch)
        if set(cand.user_state.tolist()) == {REFLECT, TRANSMIT}:
            channels = cand
            break
    if channels is None:
        return []
    rng = split_rng(cfg.seed, trial, 2)[1]
    plan = _state_ordered_plan(channels, [(0, 1)])
    qos = np.asarray(cfg.qos_min_rates, dtype=float)
    out = []
    for ratio in ratios:
        beta_r = ratio / (1.0 + ratio)
        boot = ao._boot_profiles(1, channels.n_elements, beta_r)
        rows_boot = compose_user_rows(channels, boot, plan)
        beams = ao.init_active(rows_boot, plan, cfg.tx_power_max, rng)
        # One beamformer refinement pass at pinned amplitudes.
        profiles = ao.init_passive(channels, plan, beams, beta_r, beta_transmit=1.0 - beta_r)
        rows = compose_user_rows(channels, profiles, plan)
        from .active_bf import optimize_active

        beams, _ = optimize_active(
            rows, plan, beams, np.array([0.5, 0.5]), np.ones(1), qos,
            cfg.noise_power, cfg.tx_power_max,
        )
        profiles = ao.init_passive(channels, plan, beams, beta_r, beta_transmit=1.0 - beta_r)
        rows = compose_user_rows(channels, profiles, plan)
        for share in power_shares:
            resources = ResourcePlan(
                powers=np.array([1.0 - share, share]), times=np.ones(1)
            )
            report = evaluate(rows, plan, beams.vectors, resources, qos, cfg.noise_power)
            out.append(
                {
                    "trial": trial,
                    "es_ratio": ratio,
                    "p_last": share,
                    "sum_rate": report.sum_rate,
                }
            )
    return out


def _sr_grid_trial(args):
    cfg_base, trial, m_values, nt_values, p_dbm_values = args
    out = []
    for p_dbm in p_dbm_values:
        for m in m_values:
            for nt in nt_values:
                from .config import dbm_to_watts

                cfg = replace(
                    cfg_base,
                    n_surface_elements=m,
                    n_tx_antennas=nt,
                    m_y=None,
                    m_z=None,
                    n_ty=None,
                    n_tz=None,
                    tx_power_max=dbm_to_watts(p_dbm),
                )
                rng_ch, rng_ao = split_rng(cfg.seed, trial * 1000 + m * 10 + nt, 2)
                channels = synthesize_channels(cfg, rng_ch)
                trace = ao.run(cfg, channels, rng_ao)
                out.append(
                    {
                        "trial": trial,
                        "n_surface_elements": m,
                        "n_tx_antennas": nt,
                        "p_max_dbm": p_dbm,
                        "sum_rate": trace.sum_rate,
                    }
                )
    return out


def run_experiment(
    name: str,
    cfg: SystemConfig,
    trials: int = 100,
    workers: int = 1,
    pool_map=None,
) -> dict:
    """Run one named family; returns {"rows": [...], "summary": [...]}."""
    from .harness import parallel_map  # late import to avoid a cycle

    pmap = pool_map or (lambda fn, items: parallel_map(fn, items, workers))

    if name == "convergence":
        rows = list(pmap(_convergence_trial, [(cfg, t) for t in range(trials)]))
        frac = float(np.mean([r["iterations"] < 25 and r["converged"] for r in rows]))
        summary = [
            {
                "mean_iterations": mean_ci(r["iterations"] for r in rows)[0],
                "converged_lt_25": frac,
                "quasi_monotone_frac": float(np.mean([r["quasi_monotone"] for r in rows])),
            }
        ]
    elif name == "scheme_vs_M":
        m_values = (16, 36, 64)
        nested = []
        for m in m_values:
            cfg_m = replace(cfg, n_surface_elements=m, m_y=None, m_z=None)
            nested += list(
                pmap(_scheme_trial, [(cfg_m, t, tuple(SCHEMES)) for t in range(trials)])
            )
        rows = [r for block in nested for r in block]
        summary = _group_summary(rows, ("n_surface_elements", "scheme"))
    elif name == "pairing_gain_vs_C":
        modes = ("optimized", "random", "active_only")
        rows = []
        for c in (4, 6, 8):
            cfg_c = replace(
                cfg, n_users=2 * c, n_clusters=c,
                qos_min_rates=(cfg.qos_min_rates[0],) * (2 * c),
            )
            blocks = pmap(_pairing_trial, [(cfg_c, t, modes) for t in range(trials)])
            rows += [r for block in blocks for r in block]
        summary = _group_summary(rows, ("n_clusters", "beam_mode"), value="gain")
    elif name == "clusters_vs_qos":
        qos_grid = (0.1, 0.2, 0.4, 0.8)
        modes = ("optimized", "random")
        es_ratios = (0.05, 1.0, 5.0)
        max_clusters = 6
        cfg_full = replace(
            cfg, n_users=2 * max_clusters, n_clusters=max_clusters,
            qos_min_rates=(cfg.qos_min_rates[0],) * (2 * max_clusters),
        )
        blocks = pmap(
            _clusters_trial,
            [(cfg_full, t, qos_grid, modes, es_ratios, max_clusters) for t in range(trials)],
        )
        rows = [r for block in blocks for r in block]
        summary = _group_summary(rows, ("qos", "mode"), value="supported_clusters")
    elif name == "contribution_ablation":
        from .config import dbm_to_watts

        rows = []
        for m in (16, 36):
            cfg_m = replace(
                cfg, n_surface_elements=m, m_y=None, m_z=None,
                tx_power_max=dbm_to_watts(25.0),
            )
            blocks = pmap(_ablation_trial, [(cfg_m, t) for t in range(trials)])
            rows += [r for block in blocks for r in block]
        summary = _group_summary(rows, ("n_surface_elements", "variant"))
    elif name == "es_ratio_contour":
        from .config import dbm_to_watts

        cfg_c = replace(
            cfg, n_users=2, n_clusters=1, n_surface_elements=16, m_y=None, m_z=None,
            tx_power_max=dbm_to_watts(25.0), qos_min_rates=(cfg.qos_min_rates[0],) * 2,
        )
        ratios = (0.05, 0.2, 1.0, 5.0, 20.0)
        shares = (0.1, 0.3, 0.5, 0.7, 0.9)
        blocks = pmap(
            _es_contour_trial, [(cfg_c, t, ratios, shares) for t in range(trials)]
        )
        rows = [r for block in blocks for r in block]
        summary = _group_summary(rows, ("es_ratio", "p_last"))
    elif name == "sr_vs_M_vs_Nt":
        blocks = pmap(
            _sr_grid_trial,
            [(cfg, t, (16, 36, 64), (16, 36), (20.0, 30.0)) for t in range(trials)],
        )
        rows = [r for block in blocks for r in block]
        summary = _group_summary(rows, ("p_max_dbm", "n_surface_elements", "n_tx_antennas"))
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENT_NAMES}")
    return {"rows": rows, "summary": summary}
