"""Scenario configuration, unit conversions, and seeded RNG plumbing.

All internal computation is carried out in linear units (watts, hertz,
meters, radians); dB and dBm appear only at the configuration boundary.

Config files are YAML/JSON key-value maps.  Canonical keys are the
snake_case names below; the short symbol aliases used in the scenario
tables (``P_max``, ``M``, ``N``, ``K``, ``C``, ``PL_do``, ``eta_BR``,
``eta_RU``, ``zeta``, ``BW``, ``sigma2``, ``T_max``, ``B1``, ``B2``)
are accepted as synonyms:

    p_max_dbm: 30          # BS transmit power budget per active beam (dBm)
    n_surface_elements: 16 # M, factored as m_y x m_z
    n_tx_antennas: 16      # N, factored as n_ty x n_tz
    n_users: 6             # K (must be even)
    n_clusters: 3          # C = K/2
    noise_dbm: -104        # receiver noise power (dBm)
    bandwidth_hz: 10.0e6
    carrier_freq_hz: 28.0e9
    pathloss_ref_db: 60            # reference loss at 1 m, BS->surface hop
    pathloss_ref_surface_user_db: 0  # reference loss at 1 m, surface->user hop
    pathloss_exp_bs_surface: 2.2
    pathloss_exp_surface_user: 2.8
    shadowing_db: 5.8
    coherence_time_s: 650.0e-6
    qos_min_rate: 0.4      # scalar, or qos_min_rates: [..] per user (bits/s/Hz)
    phase_bits: 3          # B1
    amplitude_bits: 3      # B2
    seed: 0

Environment overrides: ``STARHNOMA_SEED`` replaces the seed and
``STARHNOMA_OUTDIR`` sets the default output directory for run artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

ENV_SEED = "STARHNOMA_SEED"
ENV_OUTDIR = "STARHNOMA_OUTDIR"


class ConfigError(ValueError):
    """Raised when a configuration value violates a scenario invariant."""


def dbm_to_watts(level_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((level_dbm - 30.0) / 10.0)


def watts_to_dbm(power_watts: float) -> float:
    """Convert a power in watts to dBm; power must be positive."""
    if power_watts <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(power_watts) + 30.0


def db_to_linear(value_db: float) -> float:
    """Convert a dB ratio to a linear ratio."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a positive linear ratio to dB."""
    if value <= 0.0:
        raise ValueError("ratio must be positive to express in dB")
    return 10.0 * math.log10(value)


def _near_square_factors(n: int) -> tuple[int, int]:
    """Factor n = a*b with a <= b and b-a minimal (planar array layout)."""
    a = int(math.isqrt(n))
    while a > 1 and n % a != 0:
        a -= 1
    return a, n // a


@dataclass(frozen=True)
class SystemConfig:
    """Full scenario description; immutable and safe to share across trials."""

    n_tx_antennas: int = 16
    n_surface_elements: int = 16
    n_users: int = 6
    n_clusters: int = 3
    tx_power_max: float = dbm_to_watts(30.0)   # watts per active beam
    noise_power: float = dbm_to_watts(-104.0)  # watts
    carrier_freq: float = 28.0e9               # Hz
    bandwidth: float = 10.0e6                  # Hz, for absolute-throughput output
    bs_position: tuple[float, float, float] = (0.0, 0.0, 20.0)
    surface_position: tuple[float, float, float] = (45.0, -22.0, 0.0)
    user_region_radius: float = 50.0           # m, disc centred on the surface
    pathloss_ref: float = 60.0                 # dB at d0 = 1 m, BS->surface hop
    # Reference intercept of the surface->user hop.  Counting the tabulated
    # 60 dB on both hops of the cascade leaves every user tens of dB below
    # any QoS floor, so the second hop carries a reduced intercept picked so
    # that the default scenario is interference-limited and its QoS floors
    # are servable in most trials.  Override to 60 for the strict per-hop
    # reading.
    pathloss_ref_surface_user: float = 10.0
    pathloss_exp_bs_surface: float = 2.2
    pathloss_exp_surface_user: float = 2.8
    shadowing_std: float = 5.8                 # dB
    shadowing_mode: str = "fixed"              # "fixed" offset or "lognormal" per trial
    los_gain_mode: str = "random"              # "random" CSCG gain or "unit"
    include_nlos: bool = True
    # Flat per-user floor unless overridden.  The scenario table lists no
    # QoS value; 0.4 bits/s/Hz puts real pressure on the slot budget at the
    # default link budget without starving typical drops.
    qos_min_rates: tuple[float, ...] | None = None  # bits/s/Hz per user
    phase_bits: int = 3                        # B1
    amplitude_bits: int = 3                    # B2
    coherence_time: float = 650.0e-6           # s, informational
    seed: int = 0
    n_ty: int | None = None
    n_tz: int | None = None
    m_y: int | None = None
    m_z: int | None = None

    def __post_init__(self) -> None:
        if self.n_users <= 0 or self.n_users % 2 != 0:
            raise ConfigError("n_users: K must be even and positive")
        if self.n_clusters != self.n_users // 2:
            raise ConfigError("n_clusters: C must equal K/2")
        if self.tx_power_max <= 0.0:
            raise ConfigError("tx_power_max: must be positive")
        if self.noise_power <= 0.0:
            raise ConfigError("noise_power: must be positive")
        if self.n_tx_antennas <= 0:
            raise ConfigError("n_tx_antennas: must be positive")
        if self.n_surface_elements <= 0:
            raise ConfigError("n_surface_elements: must be positive")
        if self.phase_bits < 1:
            raise ConfigError("phase_bits: B1 must be at least 1")
        if self.amplitude_bits < 1:
            raise ConfigError("amplitude_bits: B2 must be at least 1")
        if self.user_region_radius <= 0.0:
            raise ConfigError("user_region_radius: must be positive")
        if self.shadowing_mode not in ("fixed", "lognormal"):
            raise ConfigError("shadowing_mode: must be 'fixed' or 'lognormal'")
        if self.los_gain_mode not in ("random", "unit"):
            raise ConfigError("los_gain_mode: must be 'random' or 'unit'")

        if self.qos_min_rates is None:
            object.__setattr__(self, "qos_min_rates", (0.4,) * self.n_users)
        else:
            object.__setattr__(
                self, "qos_min_rates", tuple(float(r) for r in self.qos_min_rates)
            )
        if len(self.qos_min_rates) != self.n_users:
            raise ConfigError("qos_min_rates: need one rate per user")
        if any(r < 0.0 for r in self.qos_min_rates):
            raise ConfigError("qos_min_rates: rates must be nonnegative")

        nty, ntz = (self.n_ty, self.n_tz)
        if nty is None or ntz is None:
            nty, ntz = _near_square_factors(self.n_tx_antennas)
        if nty * ntz != self.n_tx_antennas:
            raise ConfigError("n_ty/n_tz: product must equal n_tx_antennas")
        object.__setattr__(self, "n_ty", nty)
        object.__setattr__(self, "n_tz", ntz)

        my, mz = (self.m_y, self.m_z)
        if my is None or mz is None:
            my, mz = _near_square_factors(self.n_surface_elements)
        if my * mz != self.n_surface_elements:
            raise ConfigError("m_y/m_z: product must equal n_surface_elements")
        object.__setattr__(self, "m_y", my)
        object.__setattr__(self, "m_z", mz)

        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        object.__setattr__(
            self, "surface_position", tuple(float(v) for v in self.surface_position)
        )

    @property
    def tx_power_dbm(self) -> float:
        return watts_to_dbm(self.tx_power_max)

    @property
    def noise_dbm(self) -> float:
        return watts_to_dbm(self.noise_power)

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_freq

    def to_mapping(self) -> dict:
        """Canonical JSON-serializable mapping (used for hashing and manifests)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


# Config-file keys.  Values are (config field, converter).
_KEY_MAP = {
    "n_tx_antennas": ("n_tx_antennas", int),
    "n_surface_elements": ("n_surface_elements", int),
    "n_users": ("n_users", int),
    "n_clusters": ("n_clusters", int),
    "p_max_dbm": ("tx_power_max", dbm_to_watts),
    "tx_power_watts": ("tx_power_max", float),
    "noise_dbm": ("noise_power", dbm_to_watts),
    "noise_watts": ("noise_power", float),
    "carrier_freq_hz": ("carrier_freq", float),
    "bandwidth_hz": ("bandwidth", float),
    "bs_position": ("bs_position", tuple),
    "surface_position": ("surface_position", tuple),
    "user_region_radius_m": ("user_region_radius", float),
    "pathloss_ref_db": ("pathloss_ref", float),
    "pathloss_ref_surface_user_db": ("pathloss_ref_surface_user", float),
    "pathloss_exp_bs_surface": ("pathloss_exp_bs_surface", float),
    "pathloss_exp_surface_user": ("pathloss_exp_surface_user", float),
    "shadowing_db": ("shadowing_std", float),
    "shadowing_mode": ("shadowing_mode", str),
    "los_gain_mode": ("los_gain_mode", str),
    "include_nlos": ("include_nlos", bool),
    "qos_min_rates": ("qos_min_rates", tuple),
    "coherence_time_s": ("coherence_time", float),
    "phase_bits": ("phase_bits", int),
    "amplitude_bits": ("amplitude_bits", int),
    "seed": ("seed", int),
    "n_ty": ("n_ty", int),
    "n_tz": ("n_tz", int),
    "m_y": ("m_y", int),
    "m_z": ("m_z", int),
}

# Scenario-table symbol aliases.
_ALIASES = {
    "P_max": "p_max_dbm",
    "M": "n_surface_elements",
    "N": "n_tx_antennas",
    "N_t": "n_tx_antennas",
    "K": "n_users",
    "C": "n_clusters",
    "PL_do": "pathloss_ref_db",
    "eta_BR": "pathloss_exp_bs_surface",
    "eta_RU": "pathloss_exp_surface_user",
    "zeta": "shadowing_db",
    "BW": "bandwidth_hz",
    "sigma2": "noise_dbm",
    "T_max": "coherence_time_s",
    "B1": "phase_bits",
    "B2": "amplitude_bits",
}


def make_config(**overrides) -> SystemConfig:
    """Build a SystemConfig from config-file style keys (see module docstring)."""
    kwargs: dict = {}
    qos_scalar = None
    for raw_key, value in overrides.items():
        key = _ALIASES.get(raw_key, raw_key)
        if key == "qos_min_rate":
            qos_scalar = float(value)
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"unknown configuration key: {raw_key!r}")
        name, conv = _KEY_MAP[key]
        try:
            kwargs[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{raw_key}: cannot parse value {value!r}") from exc
    if "n_users" in kwargs and "n_clusters" not in kwargs:
        if kwargs["n_users"] % 2 != 0:
            raise ConfigError("n_users: K must be even and positive")
        kwargs["n_clusters"] = kwargs["n_users"] // 2
    cfg = SystemConfig(**kwargs)
    if qos_scalar is not None:
        cfg = replace(cfg, qos_min_rates=(qos_scalar,) * cfg.n_users)
    return cfg


def load_config(text: str) -> SystemConfig:
    """Parse a YAML/JSON config document and validate it.

    Deterministic and side-effect free: the same text always yields an
    equal SystemConfig.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a key/value mapping")
    return make_config(**data)


def load_config_file(path: str) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def apply_env_overrides(cfg: SystemConfig) -> SystemConfig:
    """Apply STARHNOMA_SEED to the config (output dir is resolved separately)."""
    seed = os.environ.get(ENV_SEED)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg


def resolve_outdir(explicit: str | None) -> str:
    return explicit or os.environ.get(ENV_OUTDIR) or "runs"


def config_hash(cfg: SystemConfig) -> str:
    """Stable content hash of a configuration (hex digest prefix)."""
    blob = json.dumps(cfg.to_mapping(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one Monte Carlo trial of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def split_rng(seed: int, trial: int, n: int) -> list[np.random.Generator]:
    """n independent child generators for one trial (channel draw, scheme draws, ...)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return [np.random.default_rng(child) for child in ss.spawn(n)]
