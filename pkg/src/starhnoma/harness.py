"""Monte Carlo runner and result emission.

Outputs are tidy CSV plus JSON summaries and a manifest recording the
config hash, seed, and version, so any row can be reproduced exactly.
Trial-level parallelism uses a process pool; results are reduced in
trial order, so the output bytes never depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .channel import synthesize_channels
from .config import SystemConfig, config_hash, dbm_to_watts, split_rng
from .schemes import SCHEMES, run_scheme

SCHEMA_VERSION = 1


def parallel_map(fn, items, workers: int = 1):
    """Order-preserving map; a process pool when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=1))


def _mc_trial(args):
    cfg, trial, scheme_names = args
    rngs = split_rng(cfg.seed, trial, 1 + len(scheme_names))
    channels = synthesize_channels(cfg, rngs[0])
    rows = []
    for i, name in enumerate(scheme_names):
        result = run_scheme(name, cfg, channels, rngs[1 + i])
        rows.append(
            {
                "trial": trial,
                "seed": cfg.seed,
                "scheme": name,
                "sum_rate": result.sum_rate,
                "feasible": result.feasible,
                "min_qos_residual": float(np.min(result.report.qos_residuals)),
                "sic_violations": len(result.report.sic_violations),
            }
        )
    return rows


def run_mc(
    cfg: SystemConfig,
    scheme_names=None,
    trials: int = 100,
    workers: int = 1,
) -> list[dict]:
    """Seeded trials x schemes on shared channel realizations."""
    names = tuple(scheme_names or SCHEMES)
    for n in names:
        if n not in SCHEMES:
            raise ValueError(f"unknown scheme {n!r}")
    blocks = parallel_map(_mc_trial, [(cfg, t, names) for t in range(trials)], workers)
    return [row for block in blocks for row in block]


SWEEP_PARAMS = ("M", "P_max", "C", "R_min", "es_ratio", "N_t")


def _sweep_cfg(cfg: SystemConfig, param: str, value: float) -> SystemConfig:
    if param == "M":
        return replace(cfg, n_surface_elements=int(value), m_y=None, m_z=None)
    if param == "P_max":
        return replace(cfg, tx_power_max=dbm_to_watts(float(value)))
    if param == "C":
        c = int(value)
        return replace(
            cfg, n_users=2 * c, n_clusters=c,
            qos_min_rates=(cfg.qos_min_rates[0],) * (2 * c),
        )
    if param == "R_min":
        return replace(cfg, qos_min_rates=(float(value),) * cfg.n_users)
    if param == "N_t":
        return replace(cfg, n_tx_antennas=int(value), n_ty=None, n_tz=None)
    if param == "es_ratio":
        return cfg  # handled through the AO initial split, see run_sweep
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def _sweep_trial(args):
    cfg, trial, scheme_names, param, value = args
    rows = _mc_trial((cfg, trial, scheme_names))
    for row in rows:
        row["param"] = param
        row["value"] = value
    return rows


def run_sweep(
    cfg: SystemConfig,
    param: str,
    values,
    scheme_names=None,
    trials: int = 50,
    workers: int = 1,
) -> list[dict]:
    """One row per (value, scheme, trial); identical trial seeds across values."""
    names = tuple(scheme_names or SCHEMES)
    rows = []
    for value in values:
        cfg_v = _sweep_cfg(cfg, param, value)
        blocks = parallel_map(
            _sweep_trial, [(cfg_v, t, names, param, value) for t in range(trials)], workers
        )
        rows += [row for block in blocks for row in block]
    return rows


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, rows: list[dict], columns=None) -> None:
    """Stable CSV: fixed column order, repr-formatted floats, sorted rows
    are the caller's concern (the harness already emits them in order)."""
    if not rows:
        columns = columns or []
    else:
        columns = columns or list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in columns])


def write_manifest(path: str, cfg: SystemConfig, extra: dict | None = None) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "version": f"starhnoma-{__version__}+cfg.{config_hash(cfg)[:8]}",
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": cfg.to_mapping(),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
