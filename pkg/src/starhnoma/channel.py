"""One-realization channel synthesis for the BS -> surface -> user link.

The BS and the surface are rectangular planar arrays in the y-z plane.
The BS->surface matrix combines a geometric line-of-sight component with
Rayleigh scatter; each surface->user vector does likewise.  Direct
BS->user paths are blocked by construction, so every user is reached
through the surface, in either its reflect or transmit mode depending on
which side of the surface plane the user stands.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, db_to_linear

REFLECT = 0
TRANSMIT = 1

_HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class SteeringVector:
    """Planar-array response: unit-norm entries over a rows x cols grid."""

    entries: np.ndarray        # complex, length rows*cols
    rows: int                  # elements along y
    cols: int                  # elements along z
    spacing: float             # inter-element spacing in wavelengths
    elevation: float           # radians
    azimuth: float             # radians


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization shared by every scheme in a trial."""

    bs_to_surface: np.ndarray    # complex (M, N_t)
    surface_to_user: np.ndarray  # complex (K, M)
    user_state: np.ndarray       # int (K,), REFLECT or TRANSMIT
    user_positions: np.ndarray   # float (K, 3) metres
    seed_key: int = 0

    @property
    def n_users(self) -> int:
        return self.surface_to_user.shape[0]

    @property
    def n_elements(self) -> int:
        return self.bs_to_surface.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.bs_to_surface.shape[1]


def upa_steering(
    elevation: float, azimuth: float, rows: int, cols: int, spacing: float = 0.5
) -> SteeringVector:
    """Vectorized planar-array response, normalized to unit l2 norm.

    Entry (m_y, m_z) carries phase 2*pi*spacing*((m_y-1) cos(el) sin(az)
    + (m_z-1) sin(el)); the grid is flattened with m_y varying fastest.
    """
    if not (-_HALF_PI <= elevation <= _HALF_PI):
        raise ValueError("elevation out of [-pi/2, pi/2]")
    if not (-_HALF_PI <= azimuth <= _HALF_PI):
        raise ValueError("azimuth out of [-pi/2, pi/2]")
    my = np.arange(rows)[:, None]
    mz = np.arange(cols)[None, :]
    phase = 2.0 * np.pi * spacing * (
        my * np.cos(elevation) * np.sin(azimuth) + mz * np.sin(elevation)
    )
    entries = np.exp(1j * phase).ravel(order="F") / np.sqrt(rows * cols)
    return SteeringVector(entries, rows, cols, spacing, elevation, azimuth)


def user_link_steering(
    elevation: float, azimuth: float, length: int, spacing: float = 0.5
) -> np.ndarray:
    """Surface->user response: a 1-D row of unit-magnitude entries.

    Kept deliberately un-normalized; the element index advances the phase
    by 2*pi*spacing*cos(el)*sin(az) per step.
    """
    phase = 2.0 * np.pi * spacing * np.arange(length) * np.cos(elevation) * np.sin(azimuth)
    return np.exp(1j * phase)


def path_loss_db(
    distance: float, ref_db: float, exponent: float, shadow_db: float = 0.0
) -> float:
    """Log-distance path loss in dB with a 1 m reference and a shadowing offset."""
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    return ref_db + 10.0 * exponent * np.log10(distance) + shadow_db


def _elevation_azimuth(src: np.ndarray, dst: np.ndarray) -> tuple[float, float]:
    """Elevation/azimuth of dst as seen from an array at src facing +/-x.

    The y-z planar arrays only resolve the (u_y, u_z) direction components,
    so front and back half-spaces map onto the same in-range angle pair.
    """
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    u = d / np.linalg.norm(d)
    el = float(np.arcsin(np.clip(u[2], -1.0, 1.0)))
    c = np.cos(el)
    az = float(np.arcsin(np.clip(u[1] / c, -1.0, 1.0))) if c > 1e-12 else 0.0
    return el, az


def _complex_gain(rng: np.random.Generator, mode: str) -> complex:
    if mode == "unit":
        return 1.0 + 0.0j
    z = rng.standard_normal() + 1j * rng.standard_normal()
    return z / np.sqrt(2.0)


def _shadow_sample(cfg: SystemConfig, rng: np.random.Generator) -> float:
    if cfg.shadowing_mode == "lognormal":
        return float(rng.normal(0.0, cfg.shadowing_std))
    return cfg.shadowing_std


def synthesize_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw one full channel realization for the configured scenario.

    Deterministic in the generator state: positions are drawn first, then
    the BS->surface matrix, then the per-user vectors in user order.
    """
    m, n_t = cfg.n_surface_elements, cfg.n_tx_antennas
    bs = np.asarray(cfg.bs_position, dtype=float)
    surf = np.asarray(cfg.surface_position, dtype=float)
    amp_scale = np.sqrt(n_t * m)

    # User drops: uniform in a disc of the configured radius around the surface.
    radius = cfg.user_region_radius * np.sqrt(rng.uniform(0.0, 1.0, cfg.n_users))
    angle = rng.uniform(0.0, 2.0 * np.pi, cfg.n_users)
    positions = np.stack(
        [surf[0] + radius * np.cos(angle), surf[1] + radius * np.sin(angle),
         np.full(cfg.n_users, surf[2])],
        axis=1,
    )
    # Served in reflect mode iff on the BS side of the surface plane (normal +/-x).
    bs_side = np.sign(bs[0] - surf[0])
    states = np.where((positions[:, 0] - surf[0]) * bs_side > 0.0, REFLECT, TRANSMIT)

    # BS -> surface matrix.
    d_bs = float(np.linalg.norm(surf - bs))
    pl_bs = path_loss_db(
        d_bs, cfg.pathloss_ref, cfg.pathloss_exp_bs_surface, _shadow_sample(cfg, rng)
    )
    att_bs = np.sqrt(db_to_linear(-pl_bs))
    arrive = upa_steering(*_elevation_azimuth(surf, bs), cfg.m_y, cfg.m_z)
    depart = upa_steering(*_elevation_azimuth(bs, surf), cfg.n_ty, cfg.n_tz)
    h_gain = _complex_gain(rng, cfg.los_gain_mode)
    bs_to_surface = att_bs * amp_scale * h_gain * np.outer(
        arrive.entries, np.conj(depart.entries)
    )
    if cfg.include_nlos:
        scatter = (rng.standard_normal((m, n_t)) + 1j * rng.standard_normal((m, n_t)))
        bs_to_surface = bs_to_surface + att_bs * scatter / np.sqrt(2.0)

    # Surface -> user vectors, one user at a time.
    g = np.empty((cfg.n_users, m), dtype=complex)
    for k in range(cfg.n_users):
        d_u = float(np.linalg.norm(positions[k] - surf))
        pl_u = path_loss_db(
            d_u,
            cfg.pathloss_ref_surface_user,
            cfg.pathloss_exp_surface_user,
            _shadow_sample(cfg, rng),
        )
        att_u = np.sqrt(db_to_linear(-pl_u))
        row = user_link_steering(*_elevation_azimuth(surf, positions[k]), m)
        g_gain = _complex_gain(rng, cfg.los_gain_mode)
        g[k] = att_u * amp_scale * g_gain * row
        if cfg.include_nlos:
            scatter = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            g[k] = g[k] + att_u * scatter / np.sqrt(2.0)

    return ChannelSet(bs_to_surface, g, states, positions, seed_key=int(cfg.seed))


def compose_end_to_end(
    g_vec: np.ndarray, profile_row: np.ndarray, bs_to_surface: np.ndarray
) -> np.ndarray:
    """End-to-end row vector g^H diag(profile) H, without forming the diagonal."""
    g_vec = np.asarray(g_vec)
    profile_row = np.asarray(profile_row)
    if g_vec.shape != profile_row.shape or g_vec.shape[0] != bs_to_surface.shape[0]:
        raise ValueError("dimension mismatch between g, profile, and H")
    return (np.conj(g_vec) * profile_row) @ bs_to_surface


def dump_channels(channels: ChannelSet, path: str, config_digest: str) -> None:
    """Persist one realization with a header recording seed and config hash."""
    header = json.dumps({"seed_key": channels.seed_key, "config_hash": config_digest})
    np.savez(
        path,
        bs_to_surface=channels.bs_to_surface,
        surface_to_user=channels.surface_to_user,
        user_state=channels.user_state,
        user_positions=channels.user_positions,
        header=np.frombuffer(header.encode("utf-8"), dtype=np.uint8),
    )


def load_channels(path: str) -> tuple[ChannelSet, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        channels = ChannelSet(
            data["bs_to_surface"],
            data["surface_to_user"],
            data["user_state"],
            data["user_positions"],
            seed_key=int(header["seed_key"]),
        )
    return channels, header
