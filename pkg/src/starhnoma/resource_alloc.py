"""Closed-form and numeric joint power/time allocation for two-user clusters.

Every cluster except the one with the largest aggregate channel strength
is served exactly at its users' QoS floors, which pins its power split
and time slot; the strongest cluster absorbs the remaining frame and
splits power so lower-order users sit exactly at QoS while the
top-order user takes the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pairing import ClusterPlan

SUM_TOL = 1e-9
# Near-equal QoS floors take the analytic quadratic-root branch; distinct
# floors go through bisection.  The boundary only decides which code path
# claims exactness, so a loose 5% works.
CASE1_REL_GAP = 0.05


class AllocationError(RuntimeError):
    """QoS floors cannot be met with the given gains and frame."""


@dataclass(frozen=True)
class ResourcePlan:
    """Per-user power coefficients and per-cluster time fractions."""

    powers: np.ndarray  # (K,), within-cluster coefficients, sum to 1 per cluster
    times: np.ndarray   # (C,), fractions of the frame, sum to 1

    def validate(self, plan: ClusterPlan, tol: float = SUM_TOL) -> None:
        if abs(float(np.sum(self.times)) - 1.0) > tol:
            raise ValueError("cluster time fractions must sum to 1")
        if np.any(self.times < -tol) or np.any(self.times > 1.0 + tol):
            raise ValueError("time fractions must lie in [0, 1]")
        if np.any(self.powers < -tol) or np.any(self.powers > 1.0 + tol):
            raise ValueError("power coefficients must lie in [0, 1]")
        for members in plan.clusters:
            if abs(float(np.sum(self.powers[list(members)])) - 1.0) > tol:
                raise ValueError("per-cluster power coefficients must sum to 1")


def power_split_case1(
    gain_first: float, gain_last: float, noise_power: float
) -> tuple[float, float]:
    """Equal-QoS split: the positive root of
    p^2 g_f g_l + p s2 (g_f + g_l) = s2 g_f gives the last-decoded user's
    share, leaving both per-user SINRs identical.

    ``gain_first`` belongs to the user decoded first (it sees the other
    user's power as interference); ``gain_last`` to the user decoded last.
    Evaluated in the cancellation-free form 2c / (b + sqrt(b^2 + 4ac)).
    """
    if gain_first <= 0.0 or gain_last <= 0.0 or noise_power <= 0.0:
        raise ValueError("gains and noise power must be positive")
    a = gain_first * gain_last
    b = noise_power * (gain_first + gain_last)
    c = noise_power * gain_first
    p_last = 2.0 * c / (b + np.sqrt(b * b + 4.0 * a * c))
    return 1.0 - p_last, p_last


def time_slot_case1(
    p_last: float, gain_last: float, noise_power: float, r_min: float
) -> float:
    """Slot fraction putting the balanced cluster exactly at its QoS rate."""
    if r_min == 0.0:
        return 0.0
    snr = gain_last * p_last / noise_power
    if snr <= 0.0:
        raise AllocationError("zero per-user SNR cannot meet a positive QoS rate")
    return float(r_min / np.log2(1.0 + snr))


def allocate_case2(
    gain_first: float,
    gain_last: float,
    noise_power: float,
    r_first: float,
    r_last: float,
) -> tuple[float, float, float]:
    """Distinct-QoS split: bisection on the last user's power share.

    Solves t*log2(1 + g_f p_f / (p_l g_f + s2)) = r_first and
    t*log2(1 + g_l p_l / s2) = r_last with p_f + p_l = 1.  The implied t
    from the second equation falls in p_l while the first equation's
    required rate multiple rises, so the residual is monotone and a
    single root lies in (0, 1).
    """
    if gain_first <= 0.0 or gain_last <= 0.0 or noise_power <= 0.0:
        raise ValueError("gains and noise power must be positive")
    if r_last == 0.0:
        if r_first == 0.0:
            return 1.0, 0.0, 0.0
        t = r_first / np.log2(1.0 + gain_first / noise_power)
        return 1.0, 0.0, float(t)
    if r_first == 0.0:
        t = r_last / np.log2(1.0 + gain_last / noise_power)
        return 0.0, 1.0, float(t)

    def residual(p_l: float) -> float:
        t = r_last / np.log2(1.0 + gain_last * p_l / noise_power)
        rate_first = t * np.log2(
            1.0 + gain_first * (1.0 - p_l) / (p_l * gain_first + noise_power)
        )
        return rate_first - r_first

    lo, hi = 0.0, 1.0  # residual -> +inf at 0+, equals -r_first at 1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if residual(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    p_last = 0.5 * (lo + hi)
    t = float(r_last / np.log2(1.0 + gain_last * p_last / noise_power))
    if abs(residual(p_last)) > 1e-9:
        raise AllocationError("no consistent joint power/time solution in (0, 1)")
    return 1.0 - p_last, p_last, t


def power_recursion_last_cluster(
    gains_by_order: np.ndarray,
    noise_power: float,
    r_mins_by_order: np.ndarray,
    t_last: float,
) -> np.ndarray:
    """Power recursion for the frame-absorbing cluster.

    Users below the top decoding order receive exactly the share that
    meets their QoS at slot fraction t_last; the top-order user takes
    the remainder, which must still cover its own floor.
    """
    if t_last <= 0.0:
        raise AllocationError("frame exhausted before the strongest cluster")
    gains = np.asarray(gains_by_order, dtype=float)
    r_mins = np.asarray(r_mins_by_order, dtype=float)
    n = gains.size
    powers = np.zeros(n)
    used = 0.0
    for k in range(n - 1):
        if r_mins[k] == 0.0:
            powers[k] = 0.0
            continue
        if gains[k] <= 0.0:
            raise AllocationError("zero gain cannot meet a positive QoS rate")
        share = (1.0 - 2.0 ** (-r_mins[k] / t_last)) * (
            1.0 + noise_power / gains[k] - used
        )
        if share < 0.0 or share > 1.0:
            raise AllocationError("per-user power share left [0, 1]")
        powers[k] = share
        used += share
    top = 1.0 - used
    if top < 0.0:
        raise AllocationError("no power left for the top-order user")
    powers[n - 1] = top
    if r_mins[n - 1] > 0.0:
        if gains[n - 1] <= 0.0:
            raise AllocationError("zero gain cannot meet a positive QoS rate")
        rate_top = t_last * np.log2(1.0 + gains[n - 1] * top / noise_power)
        if rate_top < r_mins[n - 1] - 1e-12:
            raise AllocationError("remainder cannot meet the top-order QoS rate")
    return powers


def allocate_all(
    composed_rows: np.ndarray,
    plan: ClusterPlan,
    beam_vectors: np.ndarray,
    qos: np.ndarray,
    noise_power: float,
    absorber: int | None = None,
) -> ResourcePlan:
    """Joint allocation across clusters.

    The cluster with the largest aggregate squared channel norm (ties
    break toward the lower index) absorbs the frame remainder; every
    other cluster is served exactly at QoS.  Raises AllocationError when
    the frame is exhausted or a power share leaves [0, 1].
    ``absorber`` overrides the frame-absorbing cluster choice.
    """
    k_total = composed_rows.shape[0]
    n_clusters = plan.n_clusters
    powers = np.zeros(k_total)
    times = np.zeros(n_clusters)

    gains = np.empty(k_total)
    for c, members in enumerate(plan.clusters):
        for k in members:
            gains[k] = abs(composed_rows[k] @ beam_vectors[c]) ** 2
    strength = np.array(
        [
            float(np.sum(np.abs(composed_rows[list(members)]) ** 2))
            for members in plan.clusters
        ]
    )
    best = int(np.argmax(strength)) if absorber is None else int(absorber)

    for c, members in enumerate(plan.clusters):
        if c == best:
            continue
        if len(members) == 1:
            (k,) = members
            if gains[k] <= 0.0 and qos[k] > 0.0:
                raise AllocationError("zero gain cannot meet a positive QoS rate")
            powers[k] = 1.0
            times[c] = time_slot_case1(1.0, gains[k], noise_power, float(qos[k]))
            continue
        if len(members) != 2:
            raise NotImplementedError("QoS-exact allocation handles pairs only")
        first, last = members
        r_f, r_l = float(qos[first]), float(qos[last])
        top = max(r_f, r_l)
        if gains[first] <= 0.0 or gains[last] <= 0.0:
            if top > 0.0:
                raise AllocationError("zero gain cannot meet a positive QoS rate")
            powers[first] = powers[last] = 0.5
            times[c] = 0.0
        elif top == 0.0:
            p_f, p_l = power_split_case1(gains[first], gains[last], noise_power)
            powers[first], powers[last] = p_f, p_l
            times[c] = 0.0
        elif abs(r_f - r_l) / top < CASE1_REL_GAP:
            p_f, p_l = power_split_case1(gains[first], gains[last], noise_power)
            powers[first], powers[last] = p_f, p_l
            times[c] = time_slot_case1(p_l, gains[last], noise_power, r_l)
        else:
            p_f, p_l, t_c = allocate_case2(
                gains[first], gains[last], noise_power, r_f, r_l
            )
            powers[first], powers[last] = p_f, p_l
            times[c] = t_c

    t_rem = 1.0 - float(np.sum(times))
    if t_rem <= 0.0:
        raise AllocationError("frame exhausted before the strongest cluster")
    members = plan.clusters[best]
    order_gains = gains[list(members)]
    order_qos = qos[list(members)].astype(float)
    powers[list(members)] = power_recursion_last_cluster(
        order_gains, noise_power, order_qos, t_rem
    )
    times[best] = t_rem

    result = ResourcePlan(powers=powers, times=times)
    result.validate(plan)
    return result


def _cluster_time_requirement(
    members, gains: np.ndarray, qos: np.ndarray, noise_power: float
) -> float:
    """QoS-exact slot a cluster would need if it were not frame-absorbing;
    +inf when it cannot be served at all."""
    try:
        if len(members) == 1:
            (k,) = members
            if gains[k] <= 0.0:
                return np.inf if qos[k] > 0.0 else 0.0
            return time_slot_case1(1.0, gains[k], noise_power, float(qos[k]))
        first, last = members
        r_f, r_l = float(qos[first]), float(qos[last])
        top = max(r_f, r_l)
        if gains[first] <= 0.0 or gains[last] <= 0.0:
            return np.inf if top > 0.0 else 0.0
        if top == 0.0:
            return 0.0
        if abs(r_f - r_l) / top < CASE1_REL_GAP:
            _, p_l = power_split_case1(gains[first], gains[last], noise_power)
            return time_slot_case1(p_l, gains[last], noise_power, r_l)
        return allocate_case2(gains[first], gains[last], noise_power, r_f, r_l)[2]
    except AllocationError:
        return np.inf


def _single_user_time(gain: float, qos_rate: float, noise_power: float) -> float:
    if qos_rate <= 0.0:
        return 0.0
    if gain <= 0.0:
        return np.inf
    return float(qos_rate / np.log2(1.0 + gain / noise_power))


def allocate_with_drops(
    composed_rows: np.ndarray,
    plan: ClusterPlan,
    beam_vectors: np.ndarray,
    qos: np.ndarray,
    noise_power: float,
) -> tuple[ResourcePlan, tuple[int, ...]]:
    """Best-effort allocation: unservable users go unserved one at a time
    until the rest fits; returns (plan, unserved user indices).

    An unserved user keeps zero power and zero QoS, which turns its
    cluster into dedicated service for the remaining member (the
    superposed split degenerates to (0, 1) with a QoS-exact slot).  The
    victim each round is the member of the most time-hungry cluster
    whose removal shrinks that requirement the most.  When nobody is
    servable the frame goes to the strongest cluster's top user.
    """
    from .rates import beam_gains  # local import; rates also imports this module

    gains = beam_gains(composed_rows, plan, beam_vectors)
    strength = np.array(
        [
            float(np.sum(np.abs(composed_rows[list(members)]) ** 2))
            for members in plan.clusters
        ]
    )
    unserved: list[int] = []

    def requirement(c: int, eff_qos: np.ndarray) -> float:
        members = [k for k in plan.clusters[c] if eff_qos[k] > 0.0]
        if not members:
            return 0.0
        if len(members) == 1:
            return _single_user_time(gains[members[0]], eff_qos[members[0]], noise_power)
        return _cluster_time_requirement(
            plan.clusters[c], gains, eff_qos, noise_power
        )

    while True:
        eff_qos = np.asarray(qos, dtype=float).copy()
        eff_qos[unserved] = 0.0
        active = [
            c
            for c in range(plan.n_clusters)
            if any(eff_qos[k] > 0.0 for k in plan.clusters[c])
        ]
        absorber = (
            active[int(np.argmax(strength[active]))]
            if active
            else int(np.argmax(strength))
        )
        try:
            resources = allocate_all(
                composed_rows, plan, beam_vectors, eff_qos, noise_power,
                absorber=absorber,
            )
        except AllocationError:
            if not active:
                raise  # cannot happen: all-QoS-zero always allocates
            victim_cluster = max(active, key=lambda c: requirement(c, eff_qos))
            candidates = [
                k for k in plan.clusters[victim_cluster] if eff_qos[k] > 0.0
            ]
            # Unserve the member whose removal leaves the cheapest residual.
            def residual_after(k: int) -> float:
                trial = eff_qos.copy()
                trial[k] = 0.0
                return requirement(victim_cluster, trial)

            victim = min(candidates, key=lambda k: (residual_after(k), k))
            unserved.append(victim)
            continue
        if unserved:
            powers = resources.powers.copy()
            # Unserved users carry no power; their cluster share goes to the
            # served member(s), or parks on the top-order user if none.
            for c, members in enumerate(plan.clusters):
                out = [k for k in members if k in unserved]
                if not out:
                    continue
                kept = [k for k in members if k not in unserved]
                extra = float(np.sum(powers[out]))
                powers[out] = 0.0
                if kept:
                    powers[kept[-1]] += extra
                else:
                    powers[members[-1]] = 1.0
            resources = ResourcePlan(powers=powers, times=resources.times)
            resources.validate(plan)
        return resources, tuple(sorted(unserved))


def random_resource_plan(plan: ClusterPlan, rng: np.random.Generator) -> ResourcePlan:
    """Uniform draws on the power and time simplices (baseline schemes)."""
    n_clusters = plan.n_clusters
    powers = np.zeros(max(max(m) for m in plan.clusters) + 1)
    for members in plan.clusters:
        split = rng.dirichlet(np.ones(len(members)))
        for k, p in zip(members, split):
            powers[k] = p
    times = rng.dirichlet(np.ones(n_clusters))
    return ResourcePlan(powers=powers, times=times)
