"""Two-user clustering by channel correlation plus decoding-order assignment.

Users are split into a strong and a weak half by end-to-end channel
strength; a masked correlation matrix between the halves is then fed to
an exact assignment solver so that each cluster pairs one reflect-mode
user with one transmit-mode user wherever the states allow it.  Inside a
cluster the stronger user is decoded last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import REFLECT, TRANSMIT


@dataclass(frozen=True)
class ClusterPlan:
    """Pairing of K users into K/2 clusters plus per-user decoding ranks.

    ``clusters[c]`` lists user indices by decoding position: index 0 is
    decoded first (lowest rank, weaker user), the last entry is decoded
    last and sees no residual intra-cluster interference.
    """

    clusters: tuple[tuple[int, ...], ...]
    decoding_order: dict[int, int]          # user -> 1-based rank in its cluster
    strong_group: tuple[int, ...]
    weak_group: tuple[int, ...]
    state_infeasible: bool = False

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_of(self, user: int) -> int:
        for c, members in enumerate(self.clusters):
            if user in members:
                return c
        raise KeyError(user)

    def to_mapping(self) -> dict:
        return {
            "clusters": [list(c) for c in self.clusters],
            "decoding_order": {str(k): v for k, v in sorted(self.decoding_order.items())},
            "strong_group": list(self.strong_group),
            "weak_group": list(self.weak_group),
            "state_infeasible": self.state_infeasible,
        }


def split_by_strength(
    channels: np.ndarray, stats: dict | None = None
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split users into strong/weak halves by squared channel norm.

    Ties break toward the lower user index so repeated runs agree.
    """
    k = channels.shape[0]
    if k % 2 != 0:
        raise ValueError("user count must be even")
    norms = np.einsum("kn,kn->k", channels, np.conj(channels)).real
    if stats is not None:
        stats["norm_evals"] = stats.get("norm_evals", 0) + k
    order = sorted(range(k), key=lambda i: (-norms[i], i))
    half = k // 2
    return tuple(order[:half]), tuple(order[half:])


def build_score_matrix(
    channels: np.ndarray,
    states: np.ndarray,
    groups: tuple[tuple[int, ...], tuple[int, ...]] | None = None,
    stats: dict | None = None,
) -> np.ndarray:
    """Half-by-half squared correlations |<h_i, h_j>|^2, zeroed where the
    surface-mode states match (only opposite-state pairs are useful)."""
    if groups is None:
        groups = split_by_strength(channels, stats=stats)
    strong, weak = groups
    n = len(strong)
    score = np.empty((n, n))
    for r, i in enumerate(strong):
        for c, j in enumerate(weak):
            score[r, c] = abs(np.vdot(channels[i], channels[j])) ** 2
            if stats is not None:
                stats["corr_evals"] = stats.get("corr_evals", 0) + 1
    mask = np.not_equal.outer(
        np.asarray(states)[list(strong)], np.asarray(states)[list(weak)]
    )
    return score * mask


def solve_assignment(score: np.ndarray, stats: dict | None = None) -> np.ndarray:
    """Exact assignment: permutation pi maximizing sum_i score[i, pi[i]].

    Shortest-augmenting-path method with row/column potentials, cubic in
    the matrix size.  ``stats['ops']`` receives the inner-scan operation
    count when a dict is supplied.
    """
    score = np.asarray(score, dtype=float)
    n = score.shape[0]
    if score.shape != (n, n):
        raise ValueError("score matrix must be square")
    cost = -score  # minimize negated score
    ops = 0

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match_row = np.full(n + 1, -1, dtype=int)  # column -> row; column n is virtual
    way = np.zeros(n + 1, dtype=int)
    for i in range(n):
        match_row[n] = i
        j0 = n
        min_reduced = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_row[j0]
            delta = np.inf
            j1 = -1
            for j in range(n):
                if used[j]:
                    continue
                ops += 1
                cur = cost[i0, j] - u[i0] - v[j]
                if cur < min_reduced[j]:
                    min_reduced[j] = cur
                    way[j] = j0
                if min_reduced[j] < delta:
                    delta = min_reduced[j]
                    j1 = j
            for j in range(n + 1):
                ops += 1
                if used[j]:
                    u[match_row[j]] += delta
                    v[j] -= delta
                else:
                    min_reduced[j] -= delta
            j0 = j1
            if match_row[j0] == -1:
                break
        while j0 != n:
            j1 = way[j0]
            match_row[j0] = match_row[j1]
            j0 = j1

    if stats is not None:
        stats["ops"] = stats.get("ops", 0) + ops
    perm = np.empty(n, dtype=int)
    for j in range(n):
        perm[match_row[j]] = j
    return perm


def assignment_value(score: np.ndarray, perm: np.ndarray) -> float:
    return float(sum(score[i, perm[i]] for i in range(len(perm))))


def _has_feasible_matching(states: np.ndarray, strong, weak) -> bool:
    mask = np.not_equal.outer(
        np.asarray(states)[list(strong)], np.asarray(states)[list(weak)]
    ).astype(float)
    perm = solve_assignment(mask)
    return assignment_value(mask, perm) == len(strong)


def plan_clusters(channels: np.ndarray, states: np.ndarray) -> ClusterPlan:
    """Full pairing pipeline: strength split, masked correlation scores,
    exact assignment, and decoding ranks (strong member decoded last).

    When no reflect/transmit-balanced matching exists the mask is kept (it
    zeroes the score) but the assignment still returns a plan, flagged
    ``state_infeasible``.  Among equal-score assignments, ones with more
    opposite-state pairs are preferred, which never lowers the score.
    """
    groups = split_by_strength(channels)
    strong, weak = groups
    score = build_score_matrix(channels, states, groups=groups)
    states = np.asarray(states)
    feasible_edge = np.not_equal.outer(
        states[list(strong)], states[list(weak)]
    ).astype(float)
    bonus = 1.0 + float(score.sum())
    perm = solve_assignment(score + bonus * feasible_edge)

    clusters = []
    decoding_order: dict[int, int] = {}
    for r, i in enumerate(strong):
        j = weak[perm[r]]
        clusters.append((j, i))  # weak decoded first, strong last
        decoding_order[i] = 2
        decoding_order[j] = 1
    infeasible = not _has_feasible_matching(states, strong, weak)
    return ClusterPlan(
        clusters=tuple(clusters),
        decoding_order=decoding_order,
        strong_group=strong,
        weak_group=weak,
        state_infeasible=infeasible,
    )


def single_user_plan(n_users: int) -> ClusterPlan:
    """Degenerate plan with one user per cluster (orthogonal-access runs)."""
    return ClusterPlan(
        clusters=tuple((k,) for k in range(n_users)),
        decoding_order={k: 1 for k in range(n_users)},
        strong_group=tuple(range(n_users)),
        weak_group=(),
    )


def random_plan(
    states: np.ndarray,
    rng: np.random.Generator,
    channels: np.ndarray | None = None,
    order: str = "random",
) -> ClusterPlan:
    """Uniformly random state-feasible pairing, for baselines and ablations.

    ``order="strength"`` ranks the larger-norm member last (needs channels);
    ``order="random"`` shuffles ranks.  Unbalanced reflect/transmit counts
    fall back to arbitrary leftover pairs, flagged state_infeasible.
    """
    states = np.asarray(states)
    k = len(states)
    reflect = [i for i in range(k) if states[i] == REFLECT]
    transmit = [i for i in range(k) if states[i] == TRANSMIT]
    rng.shuffle(reflect)
    rng.shuffle(transmit)
    pairs = list(zip(reflect, transmit))
    leftovers = reflect[len(pairs):] + transmit[len(pairs):]
    infeasible = bool(leftovers)
    rng.shuffle(leftovers)
    pairs += [tuple(leftovers[i : i + 2]) for i in range(0, len(leftovers), 2)]

    clusters = []
    decoding_order: dict[int, int] = {}
    for a, b in pairs:
        if order == "strength":
            if channels is None:
                raise ValueError("strength ordering needs channel rows")
            na = float(np.real(np.vdot(channels[a], channels[a])))
            nb = float(np.real(np.vdot(channels[b], channels[b])))
            weakfirst = (a, b) if na < nb or (na == nb and a < b) else (b, a)
        else:
            weakfirst = (a, b) if rng.uniform() < 0.5 else (b, a)
        clusters.append(weakfirst)
        decoding_order[weakfirst[0]] = 1
        decoding_order[weakfirst[1]] = 2
    return ClusterPlan(
        clusters=tuple(clusters),
        decoding_order=decoding_order,
        strong_group=tuple(c[1] for c in clusters),
        weak_group=tuple(c[0] for c in clusters),
        state_infeasible=infeasible,
    )
