"""Command-line entry points: single runs, Monte Carlo, sweeps,
experiment families, the oracle self-check battery, and the kernel
backend benchmark."""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import click
import numpy as np

from . import __version__
from .config import (
    SystemConfig,
    apply_env_overrides,
    config_hash,
    load_config_file,
    make_config,
    resolve_outdir,
    split_rng,
)
from .channel import dump_channels, synthesize_channels
from . import ao
from .experiments import EXPERIMENT_NAMES, run_experiment
from .harness import (
    SWEEP_PARAMS,
    ensure_outdir,
    run_mc,
    run_sweep,
    write_csv,
    write_manifest,
)
from .schemes import SCHEMES


def _load_cfg(config_path: str | None, seed: int | None) -> SystemConfig:
    cfg = load_config_file(config_path) if config_path else make_config()
    cfg = apply_env_overrides(cfg)
    if seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=seed)
    return cfg


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Dual-mode smart-surface hybrid-NOMA downlink simulator."""


@main.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--outdir", type=click.Path(), default=None)
@click.option("--xi", type=float, default=None, help="Convergence threshold on |dR|^2.")
@click.option("--max-iter", type=int, default=None)
@click.option("--dump-channels", "dump", is_flag=True, help="Save the channel draw.")
def run(config_path, seed, outdir, xi, max_iter, dump) -> None:
    """One alternating-optimization trace on a single channel draw."""
    cfg = _load_cfg(config_path, seed)
    out = ensure_outdir(resolve_outdir(outdir))
    rng_ch, rng_ao = split_rng(cfg.seed, 0, 2)
    channels = synthesize_channels(cfg, rng_ch)
    options = ao.AoOptions()
    if xi is not None or max_iter is not None:
        from dataclasses import replace as drep

        options = drep(
            options,
            **{
                k: v
                for k, v in {
                    "convergence_threshold": xi,
                    "max_iterations": max_iter,
                }.items()
                if v is not None
            },
        )
    trace = ao.run(cfg, channels, rng_ao, options=options)
    with open(os.path.join(out, "trace.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(trace.to_jsonl())
    write_manifest(
        os.path.join(out, "manifest.json"), cfg,
        {"command": "run", "status": trace.status, "sum_rate": trace.sum_rate},
    )
    if dump:
        dump_channels(channels, os.path.join(out, "channels.npz"), config_hash(cfg))
    click.echo(
        f"status={trace.status} iterations={trace.iterations} "
        f"sum_rate={trace.sum_rate:.6f} bits/s/Hz -> {out}"
    )


@main.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--schemes", "scheme_csv", default=",".join(SCHEMES), show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--outdir", type=click.Path(), default=None)
def mc(config_path, seed, trials, scheme_csv, workers, outdir) -> None:
    """Monte Carlo trials over seeded channel draws."""
    cfg = _load_cfg(config_path, seed)
    out = ensure_outdir(resolve_outdir(outdir))
    names = tuple(s.strip() for s in scheme_csv.split(",") if s.strip())
    rows = run_mc(cfg, names, trials=trials, workers=workers)
    write_csv(os.path.join(out, "mc.csv"), rows)
    summary = {}
    for name in names:
        vals = [r["sum_rate"] for r in rows if r["scheme"] == name]
        summary[name] = {"mean_sum_rate": float(np.mean(vals)), "n": len(vals)}
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(
        os.path.join(out, "manifest.json"), cfg,
        {"command": "mc", "trials": trials, "schemes": list(names)},
    )
    click.echo(f"{len(rows)} rows -> {out}/mc.csv")


@main.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--param", type=click.Choice(SWEEP_PARAMS), required=True)
@click.option("--values", required=True, help="Comma-separated grid values.")
@click.option("--trials", type=int, default=50, show_default=True)
@click.option("--schemes", "scheme_csv", default="hnoma-star", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--outdir", type=click.Path(), default=None)
def sweep(config_path, seed, param, values, trials, scheme_csv, workers, outdir) -> None:
    """Vary one scenario parameter over a grid."""
    cfg = _load_cfg(config_path, seed)
    out = ensure_outdir(resolve_outdir(outdir))
    grid = [float(v) for v in values.split(",")]
    names = tuple(s.strip() for s in scheme_csv.split(",") if s.strip())
    rows = run_sweep(cfg, param, grid, names, trials=trials, workers=workers)
    write_csv(os.path.join(out, "sweep.csv"), rows)
    write_manifest(
        os.path.join(out, "manifest.json"), cfg,
        {"command": "sweep", "param": param, "values": grid, "trials": trials},
    )
    click.echo(f"{len(rows)} rows -> {out}/sweep.csv")


@main.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=click.Choice(EXPERIMENT_NAMES), required=True)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--outdir", type=click.Path(), default=None)
def experiment(config_path, seed, name, trials, workers, outdir) -> None:
    """One named figure-family experiment at desk scale."""
    cfg = _load_cfg(config_path, seed)
    out = ensure_outdir(resolve_outdir(outdir))
    result = run_experiment(name, cfg, trials=trials, workers=workers)
    write_csv(os.path.join(out, f"{name}.csv"), result["rows"])
    with open(os.path.join(out, f"{name}_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(result["summary"], fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    write_manifest(
        os.path.join(out, "manifest.json"), cfg,
        {"command": "experiment", "name": name, "trials": trials},
    )
    click.echo(f"{len(result['rows'])} rows -> {out}/{name}.csv")


@main.command("oracle-check")
@click.option("--seed", type=int, default=0, show_default=True)
def oracle_check(seed) -> None:
    """Fast brute-force cross-checks of the main numeric paths."""
    import numpy as np

    from . import oracle
    from .pairing import assignment_value, solve_assignment
    from .resource_alloc import power_split_case1

    rng = np.random.default_rng(seed)
    failures = 0

    def check(label, ok):
        nonlocal failures
        click.echo(f"[{'PASS' if ok else 'FAIL'}] {label}")
        failures += 0 if ok else 1

    ok = True
    for _ in range(50):
        n = int(rng.integers(2, 5))
        score = rng.random((n, n))
        perm = solve_assignment(score)
        _, best = oracle.brute_force_pairing(score)
        ok &= abs(assignment_value(score, perm) - best) < 1e-12
    check("assignment equals exhaustive matching (50 instances)", ok)

    gi = 10.0 ** rng.uniform(-2, 4, 10_000)
    gj = 10.0 ** rng.uniform(-2, 4, 10_000)
    s2 = 10.0 ** rng.uniform(-6, 2, 10_000)
    roots = oracle.quadratic_power_roots(gi, gj, s2)
    closed = np.array([power_split_case1(a, b, c)[1] for a, b, c in zip(gi, gj, s2)])
    check(
        "closed-form power split matches bisection (10k triples)",
        bool(np.max(np.abs(roots - closed)) < 1e-10),
    )

    from .channel import upa_steering

    ok = True
    for _ in range(20):
        el, az = rng.uniform(-np.pi / 2, np.pi / 2, 2)
        vec = upa_steering(el, az, 4, 4).entries
        direct = np.empty(16, dtype=complex)
        for mz in range(4):
            for my in range(4):
                phase = 2 * np.pi * 0.5 * (my * np.cos(el) * np.sin(az) + mz * np.sin(el))
                direct[my + 4 * mz] = np.exp(1j * phase) / 4.0
        ok &= bool(np.allclose(vec, direct, atol=1e-12))
    check("planar steering matches scalar evaluation (20 angles)", ok)

    if failures:
        raise SystemExit(1)
    click.echo("all oracle checks passed")


@main.command()
@click.option("--size", type=int, default=36, show_default=True,
              help="Surface elements for the benchmark problem.")
@click.option("--repeats", type=int, default=20, show_default=True)
def bench(size, repeats) -> None:
    """Time the barrier kernel under the numba and numpy backends."""
    script = (
        "import time, numpy as np\n"
        "from starhnoma import config as c, channel, ao\n"
        "from starhnoma._kernels import BACKEND, warmup\n"
        "warmup()\n"
        f"cfg = c.make_config(seed=3, n_surface_elements={size})\n"
        "rng_ch, rng_ao = c.split_rng(cfg.seed, 0, 2)\n"
        "ch = channel.synthesize_channels(cfg, rng_ch)\n"
        "t0 = time.perf_counter()\n"
        f"for r in range({repeats}):\n"
        "    ao.run(cfg, ch, c.trial_rng(cfg.seed, r), ao.AoOptions(max_iterations=3,"
        " convergence_threshold=0.0))\n"
        "dt = (time.perf_counter() - t0) / " + str(repeats) + "\n"
        "print(f'{BACKEND}: {dt*1e3:.1f} ms per 3-iteration run')\n"
    )
    for backend in ("numba", "numpy"):
        env = dict(os.environ, STARHNOMA_BACKEND=backend)
        t0 = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-c", script], env=env, capture_output=True, text=True
        )
        if proc.returncode != 0:
            click.echo(proc.stderr)
            raise SystemExit(proc.returncode)
        click.echo(proc.stdout.strip() + f"  (wall incl. startup {time.perf_counter()-t0:.1f}s)")


if __name__ == "__main__":
    main()
