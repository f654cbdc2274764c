"""Independent brute-force references for tests.

Everything here is written against plain arrays with its own scalar
arithmetic on purpose: these functions share no code with the modules
they check.  Scale caps (at most 8 users, 2 antennas, 2 surface
elements) keep each search under a second.
"""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_pairing(score: np.ndarray, enumeration: str = "lexicographic"):
    """Exhaustive max over all assignments of rows to columns.

    Returns (best permutation, best value).  Two enumeration orders are
    provided so the oracle can be cross-validated against itself.
    """
    score = np.asarray(score, dtype=float)
    n = score.shape[0]
    if n > 4 + 4:  # K/2 for K <= 8 is at most 4; allow small headroom
        raise ValueError("brute force capped at 8 rows")

    best_perm, best_val = None, -np.inf
    if enumeration == "lexicographic":
        for perm in itertools.permutations(range(n)):
            val = 0.0
            for i in range(n):
                val += score[i, perm[i]]
            if val > best_val:
                best_val, best_perm = val, perm
    elif enumeration == "dfs":
        used = [False] * n
        cur = [0] * n

        def descend(row: int, acc: float):
            nonlocal best_val, best_perm
            if row == n:
                if acc > best_val:
                    best_val, best_perm = acc, tuple(cur)
                return
            for col in range(n - 1, -1, -1):  # reversed order on purpose
                if not used[col]:
                    used[col] = True
                    cur[row] = col
                    descend(row + 1, acc + score[row, col])
                    used[col] = False

        descend(0, 0.0)
    else:
        raise ValueError(f"unknown enumeration {enumeration!r}")
    return np.asarray(best_perm, dtype=int), float(best_val)


def _pair_rates(gain_weak, gain_strong, p_weak, p_strong, sigma2, time_frac):
    """Scalar two-user rates; the weak user is decoded first."""
    sinr_weak = gain_weak * p_weak / (gain_weak * p_strong + sigma2)
    sinr_strong = gain_strong * p_strong / sigma2
    return (
        time_frac * np.log2(1.0 + sinr_weak),
        time_frac * np.log2(1.0 + sinr_strong),
    )


def grid_beamformer(
    channel_rows: np.ndarray,
    powers: np.ndarray,
    time_frac: float,
    sigma2: float,
    p_max: float,
    n_alpha: int = 96,
    n_phase: int = 192,
):
    """Dense beamformer search on the power sphere for up to two antennas.

    Rates only grow with transmit power, so the search space is the
    sphere of radius sqrt(p_max); the leading coordinate is taken real
    because a global phase never changes a magnitude.  Rows are ordered
    by decoding position (weak first).  Returns (best w, best sum rate).
    """
    rows = np.asarray(channel_rows)
    n_users, n_t = rows.shape
    if n_t > 2:
        raise ValueError("grid oracle capped at 2 antennas")
    if n_t == 1:
        candidates = np.array([[np.sqrt(p_max)]], dtype=complex)
    else:
        alpha = np.linspace(0.0, np.pi / 2.0, n_alpha)
        phase = np.linspace(0.0, 2.0 * np.pi, n_phase, endpoint=False)
        a, p = np.meshgrid(alpha, phase, indexing="ij")
        candidates = np.stack(
            [np.cos(a).ravel(), (np.sin(a) * np.exp(1j * p)).ravel()], axis=1
        ) * np.sqrt(p_max)

    gains = np.abs(candidates @ rows.T) ** 2  # (Q, U)
    if n_users == 1:
        sum_rate = time_frac * np.log2(1.0 + gains[:, 0] * powers[0] / sigma2)
    elif n_users == 2:
        r_w, r_s = _pair_rates(
            gains[:, 0], gains[:, 1], powers[0], powers[1], sigma2, time_frac
        )
        sum_rate = r_w + r_s
    else:
        raise ValueError("grid oracle handles one or two users")
    best = int(np.argmax(sum_rate))
    return candidates[best], float(sum_rate[best])


def phase_codebook(bits: int) -> np.ndarray:
    n = 2**bits
    return 2.0 * np.pi * np.arange(n) / n


def amplitude_codebook(bits: int) -> np.ndarray:
    n = 2**bits
    return np.arange(n) / (n - 1)


def _enumerate_profiles(n_elements: int, bits_phase: int, bits_amp: int):
    """All coupled (reflect, transmit) element profiles on the codebooks.

    Per element: reflect and transmit phases are free; amplitudes are
    tied by beta_t = 1 - beta_r.  Returns (u_reflect, u_transmit) with
    one row per profile combination.
    """
    psi = phase_codebook(bits_phase)
    omega = amplitude_codebook(bits_amp)
    per_element = [
        (br * np.exp(1j * tr), (1.0 - br) * np.exp(1j * tt))
        for br in omega
        for tr in psi
        for tt in psi
    ]
    u_r = np.empty((len(per_element) ** n_elements, n_elements), dtype=complex)
    u_t = np.empty_like(u_r)
    for row, combo in enumerate(itertools.product(per_element, repeat=n_elements)):
        for m, (er, et) in enumerate(combo):
            u_r[row, m] = er
            u_t[row, m] = et
    return u_r, u_t


def exhaustive_codebook_profiles(
    effective: np.ndarray,
    states: np.ndarray,
    powers: np.ndarray,
    time_frac: float,
    sigma2: float,
    bits_phase: int,
    bits_amp: int,
):
    """Exhaustive profile search for a fixed beamformer, up to 2 elements.

    ``effective[k]`` is the per-element channel seen by user k (so the
    users' scalars are u_mode(k) . effective[k]); rows ordered by
    decoding position.  Returns (best (u_r, u_t), best sum rate).
    """
    effective = np.asarray(effective)
    n_users, m = effective.shape
    if m > 2:
        raise ValueError("codebook oracle capped at 2 elements")
    u_r, u_t = _enumerate_profiles(m, bits_phase, bits_amp)
    gains = np.empty((u_r.shape[0], n_users))
    for k in range(n_users):
        rows = u_r if states[k] == 0 else u_t
        gains[:, k] = np.abs(rows @ effective[k]) ** 2
    if n_users == 1:
        sum_rate = time_frac * np.log2(1.0 + gains[:, 0] * powers[0] / sigma2)
    else:
        r_w, r_s = _pair_rates(
            gains[:, 0], gains[:, 1], powers[0], powers[1], sigma2, time_frac
        )
        sum_rate = r_w + r_s
    best = int(np.argmax(sum_rate))
    return (u_r[best], u_t[best]), float(sum_rate[best])


def exhaustive_tiny_search(
    bs_to_surface: np.ndarray,
    surface_to_user: np.ndarray,
    states: np.ndarray,
    qos: np.ndarray,
    sigma2: float,
    p_max: float,
    bits_phase: int,
    bits_amp: int,
    n_alpha: int = 48,
    n_phase: int = 96,
    batch: int = 256,
) -> dict:
    """Joint profile-codebook x beamformer-sphere search for one 2-user cluster.

    Mirrors the system's own design rules independently: decoding order by
    composed channel norm, full frame (t=1), weak user served exactly at
    its QoS rate, remaining power to the strong user.  Infeasible corners
    score -inf.  Capped at 2 antennas / 2 elements.
    """
    H = np.asarray(bs_to_surface)
    g = np.asarray(surface_to_user)
    m, n_t = H.shape
    n_users = g.shape[0]
    if m > 2 or n_t > 2 or n_users > 2:
        raise ValueError("tiny search capped at 2 antennas, 2 elements, 2 users")

    if n_t == 1:
        w_grid = np.array([[np.sqrt(p_max)]], dtype=complex)
    else:
        alpha = np.linspace(0.0, np.pi / 2.0, n_alpha)
        phase = np.linspace(0.0, 2.0 * np.pi, n_phase, endpoint=False)
        a, p = np.meshgrid(alpha, phase, indexing="ij")
        w_grid = np.stack(
            [np.cos(a).ravel(), (np.sin(a) * np.exp(1j * p)).ravel()], axis=1
        ) * np.sqrt(p_max)
    hw = H @ w_grid.T  # (M, Q)

    u_r_all, u_t_all = _enumerate_profiles(m, bits_phase, bits_amp)
    n_profiles = u_r_all.shape[0]
    best = {"sum_rate": -np.inf, "profile": None, "w": None}

    for start in range(0, n_profiles, batch):
        u_r = u_r_all[start : start + batch]
        u_t = u_t_all[start : start + batch]
        rows = [u_r if states[k] == 0 else u_t for k in range(n_users)]
        # Composed row vectors (per profile) drive the decoding order.
        comp = [(np.conj(g[k])[None, :] * rows[k]) @ H for k in range(n_users)]
        if n_users == 1:
            gains = np.abs(rows[0] @ (np.conj(g[0])[:, None] * hw)) ** 2  # (P, Q)
            feasible = np.log2(1.0 + gains / sigma2) >= qos[0]
            sum_rate = np.where(feasible, np.log2(1.0 + gains / sigma2), -np.inf)
        else:
            g0 = np.abs(rows[0] @ (np.conj(g[0])[:, None] * hw)) ** 2
            g1 = np.abs(rows[1] @ (np.conj(g[1])[:, None] * hw)) ** 2
            n0 = np.einsum("pn,pn->p", comp[0], np.conj(comp[0])).real
            n1 = np.einsum("pn,pn->p", comp[1], np.conj(comp[1])).real
            first_is_weak = (n0 <= n1)[:, None]
            gw = np.where(first_is_weak, g0, g1)
            gs = np.where(first_is_weak, g1, g0)
            qw = np.where(first_is_weak[:, 0], qos[0], qos[1])[:, None]
            qs = np.where(first_is_weak[:, 0], qos[1], qos[0])[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                p_weak = (1.0 - 2.0**-qw) * (1.0 + sigma2 / gw)
                p_strong = 1.0 - p_weak
                r_w, r_s = _pair_rates(gw, gs, p_weak, p_strong, sigma2, 1.0)
                ok = (p_weak >= 0.0) & (p_weak <= 1.0) & (r_s >= qs - 1e-12)
                sum_rate = np.where(ok, r_w + r_s, -np.inf)
        flat = int(np.nanargmax(sum_rate))
        pi, qi = np.unravel_index(flat, sum_rate.shape)
        if sum_rate[pi, qi] > best["sum_rate"]:
            best = {
                "sum_rate": float(sum_rate[pi, qi]),
                "profile": (u_r[pi].copy(), u_t[pi].copy()),
                "w": w_grid[qi].copy(),
            }
    return best


def numeric_root(func, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Bisection root on a bracket with a sign change."""
    flo, fhi = func(lo), func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("no sign change on bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = func(mid)
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def quadratic_power_roots(
    gain_weak: np.ndarray, gain_strong: np.ndarray, sigma2: np.ndarray, tol: float = 1e-13
) -> np.ndarray:
    """Vectorized bisection for p^2 gi gj + p s2 (gi+gj) - s2 gi = 0 on (0, 1).

    gi is the weak (decoded-first) user's gain, gj the strong user's.
    The polynomial is increasing on p > 0, negative at 0 and positive at
    1 for positive inputs, so the bracket always holds.
    """
    gi = np.asarray(gain_weak, dtype=float)
    gj = np.asarray(gain_strong, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)

    def poly(p):
        return p * p * gi * gj + p * s2 * (gi + gj) - s2 * gi

    lo = np.zeros_like(gi)
    hi = np.ones_like(gi)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        neg = poly(mid) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)
