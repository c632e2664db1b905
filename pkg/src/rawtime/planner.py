"""Slot sizing and station grouping on top of the delivery-time model.

Given a population in which each station independently holds a frame with
probability ``p_active``, the delivery-time distribution for a tagged station
is a binomial mixture of fixed-population distributions.  The planner turns
mixture quantiles into minimal RAW slot durations and sweeps group counts to
minimize total reserved channel time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import binom

from .chains import run_chains
from .distribution import TimeDistribution, UnsatisfiableQuantileError, merge_weighted
from .params import ConfigurationError, ModelParams, SlotDurations

#: Longest RAW slot the 802.11ah signalling can encode, in microseconds.
MAX_RAW_SLOT_US = 246_140

#: Binomial tail probability ignored (and booked as deficit) per mixture side.
_WEIGHT_TAIL = 1e-10


class Conditioning(str, Enum):
    """How the random active count is conditioned for the tagged-station mixture.

    ``TAGGED_HAS_PACKET``: the question "how long until a station delivers"
    presupposes that station holds a frame, so the remaining N-1 stations are
    the random part.  ``POPULATION_WIDE`` applies the plain binomial over all
    N stations, restricted to k >= 1 and renormalized.
    """

    TAGGED_HAS_PACKET = "tagged-has-packet"
    POPULATION_WIDE = "population-wide"


@dataclass(frozen=True)
class MixtureSpec:
    n_total: int
    p_active: float
    conditioning: Conditioning = Conditioning.TAGGED_HAS_PACKET

    def __post_init__(self) -> None:
        if self.n_total < 1:
            raise ConfigurationError(f"n_total must be >= 1, got {self.n_total}")
        if not 0.0 <= self.p_active <= 1.0:
            raise ConfigurationError(f"p_active must lie in [0, 1], got {self.p_active}")
        object.__setattr__(self, "conditioning", Conditioning(self.conditioning))


class DistributionCache:
    """Memoizes per-population chain runs across planner sweeps.

    ``params.n_stations`` is ignored; the population comes from the lookup key.
    """

    def __init__(self, params: ModelParams, durations: SlotDurations):
        self.params = params
        self.durations = durations
        self._pa: dict[int, TimeDistribution] = {}
        self._pb: dict[int, TimeDistribution] = {}

    def pa(self, k: int) -> TimeDistribution:
        if k not in self._pa:
            result = run_chains(self.params.with_stations(k), self.durations, compute_b=False)
            self._pa[k] = result.p_a
        return self._pa[k]

    def pb(self, k: int) -> TimeDistribution:
        if k not in self._pb:
            result = run_chains(self.params.with_stations(k), self.durations)
            self._pa.setdefault(k, result.p_a)
            self._pb[k] = result.p_b
        return self._pb[k]


def auto_k_stride(n: int, p: float) -> int:
    """Grid stride for subsampled mixtures: about two grid points per binomial
    standard deviation, so the mixture stays smooth while large sweeps reuse a
    shared lattice of population sizes."""
    return max(1, round(math.sqrt(n * p * (1.0 - p)) / 2.0))


def _stride_from_weights(k_values: np.ndarray, weights: np.ndarray) -> int:
    total = float(np.sum(weights))
    mean = float(np.dot(weights, k_values)) / total
    var = float(np.dot(weights, (k_values - mean) ** 2)) / total
    return max(1, round(math.sqrt(var) / 2.0))


def mixture_weights(spec: MixtureSpec) -> np.ndarray:
    """Weights over active counts k = 1..n_total; sums to 1."""
    n, p = spec.n_total, spec.p_active
    k = np.arange(1, n + 1)
    if spec.conditioning is Conditioning.TAGGED_HAS_PACKET:
        return binom.pmf(k - 1, n - 1, p)
    if p == 0.0:
        raise ConfigurationError(
            "population-wide conditioning with p_active=0 has empty support"
        )
    norm = 1.0 - (1.0 - p) ** n
    return binom.pmf(k, n, p) / norm


def _grid_points(ks: np.ndarray, stride: int) -> np.ndarray:
    """Subsampling lattice: multiples of ``stride`` plus both endpoints.

    Anchoring on absolute multiples makes different mixtures in a sweep share
    chain runs.
    """
    lo, hi = int(ks[0]), int(ks[-1])
    inner = np.arange(-(-lo // stride) * stride, hi + 1, stride)
    return np.unique(np.concatenate(([lo], inner, [hi])))


def _subsample_weights(ks: np.ndarray, weights: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Reassign each k's weight linearly onto the two surrounding grid points."""
    grid = _grid_points(ks, stride)
    out = np.zeros(grid.size)
    pos = np.searchsorted(grid, ks)
    exact = grid[np.minimum(pos, grid.size - 1)] == ks
    np.add.at(out, pos[exact], weights[exact])
    rest = ~exact
    hi_idx = pos[rest]
    lo_idx = hi_idx - 1
    span = (grid[hi_idx] - grid[lo_idx]).astype(float)
    frac_hi = (ks[rest] - grid[lo_idx]) / span
    np.add.at(out, lo_idx, weights[rest] * (1.0 - frac_hi))
    np.add.at(out, hi_idx, weights[rest] * frac_hi)
    return grid, out


def _mixture(
    weights: np.ndarray,
    k_values: np.ndarray,
    component,  # k -> TimeDistribution
    k_stride: int | str,
) -> TimeDistribution:
    keep = weights > 0.0
    k_values, weights = k_values[keep], weights[keep]
    if k_values.size == 0:
        raise ConfigurationError("mixture has no components with positive weight")

    # Trim negligible binomial tails; the trimmed weight lands in the deficit.
    cum = np.cumsum(weights)
    lo = int(np.searchsorted(cum, _WEIGHT_TAIL))
    hi = int(np.searchsorted(cum, cum[-1] - _WEIGHT_TAIL, side="right"))
    k_values, weights = k_values[lo : hi + 1], weights[lo : hi + 1]

    stride = _stride_from_weights(k_values, weights) if k_stride == "auto" else int(k_stride)
    if stride > 1 and k_values.size > 2:
        k_values, weights = _subsample_weights(k_values, weights, stride)

    return merge_weighted(
        (float(w), component(int(k))) for k, w in zip(k_values, weights)
    )


def mixture_pa(
    spec: MixtureSpec,
    params: ModelParams,
    durations: SlotDurations,
    *,
    cache: DistributionCache | None = None,
    k_stride: int | str = 1,
) -> TimeDistribution:
    """Tagged-station delivery-time distribution under a random active count.

    ``k_stride > 1`` (or ``"auto"``) evaluates the chain only on a lattice of
    population sizes and reassigns the skipped binomial weights linearly onto
    the neighbouring lattice points; the lattice is anchored on absolute
    multiples of the stride so sweeps share runs.  ``params.n_stations`` is
    overridden by each component's population.
    """
    cache = cache or DistributionCache(params, durations)
    weights = mixture_weights(spec)
    k_values = np.arange(1, spec.n_total + 1)
    return _mixture(weights, k_values, cache.pa, k_stride)


def mixture_pb(
    n_stations: int,
    p_active: float,
    params: ModelParams,
    durations: SlotDurations,
    *,
    cache: DistributionCache | None = None,
    k_stride: int | str = 1,
) -> TimeDistribution:
    """All-actives completion-time distribution under a Binomial(n, p) active
    count; zero active stations complete instantly (atom at duration 0)."""
    if n_stations < 1:
        raise ConfigurationError(f"n_stations must be >= 1, got {n_stations}")
    if not 0.0 <= p_active <= 1.0:
        raise ConfigurationError(f"p_active must lie in [0, 1], got {p_active}")
    cache = cache or DistributionCache(params, durations)
    weights = binom.pmf(np.arange(0, n_stations + 1), n_stations, p_active)
    k_values = np.arange(0, n_stations + 1)

    def component(k: int) -> TimeDistribution:
        if k == 0:
            return TimeDistribution.from_atoms({0: 1.0})
        return cache.pb(k)

    return _mixture(weights, k_values, component, k_stride)


def plan_slot_duration(dist: TimeDistribution, q: float) -> int:
    """Minimal slot duration (microseconds) delivering with probability >= q."""
    return dist.quantile(q)


@dataclass(frozen=True)
class GroupPlan:
    """One grouping decision: ``per_group_slot`` is the slot duration of the
    largest group (groups differ in size by at most one station);
    ``total_reserved`` sums the per-group slots of all groups."""

    group_count: int
    group_sizes: tuple[int, ...]
    per_group_slot: int
    total_reserved: int
    quantile_target: float
    standard_compliant: bool
    feasible: bool = True

    @classmethod
    def infeasible(cls, g: int, sizes: tuple[int, ...], q: float) -> "GroupPlan":
        return cls(
            group_count=g,
            group_sizes=sizes,
            per_group_slot=0,
            total_reserved=0,
            quantile_target=q,
            standard_compliant=False,
            feasible=False,
        )


def _even_split(n: int, g: int) -> tuple[int, ...]:
    base, rem = divmod(n, g)
    return (base + 1,) * rem + (base,) * (g - rem)


def optimize_groups(
    spec: MixtureSpec,
    params: ModelParams,
    durations: SlotDurations,
    q: float,
    g_range: tuple[int, int],
    problem: str = "A",
    *,
    cache: DistributionCache | None = None,
    k_stride: int | str = 1,
) -> tuple[list[GroupPlan], GroupPlan]:
    """Sweep group counts and return (all plans, plan minimizing total time).

    Problem "A" sizes each group's slot so an arbitrary active station in the
    group delivers with probability >= q; problem "B" so all the group's
    active stations finish with probability >= q.  Groups are split as evenly
    as possible and per-group active counts are binomial in the group size.
    Ties in total reserved time resolve toward fewer groups.
    """
    if problem not in ("A", "B"):
        raise ConfigurationError(f"problem must be 'A' or 'B', got {problem!r}")
    g_min, g_max = g_range
    if not 1 <= g_min <= g_max <= spec.n_total:
        raise ConfigurationError(
            f"group range [{g_min}, {g_max}] must lie within [1, {spec.n_total}]"
        )
    cache = cache or DistributionCache(params, durations)

    slot_by_size: dict[int, int | None] = {}
    best_achievable = 0.0

    def slot_for(size: int) -> int | None:
        nonlocal best_achievable
        if size not in slot_by_size:
            if problem == "A":
                dist = mixture_pa(
                    MixtureSpec(size, spec.p_active, spec.conditioning),
                    params,
                    durations,
                    cache=cache,
                    k_stride=k_stride,
                )
            else:
                dist = mixture_pb(
                    size, spec.p_active, params, durations, cache=cache, k_stride=k_stride
                )
            best_achievable = max(best_achievable, dist.total_mass)
            try:
                slot_by_size[size] = dist.quantile(q)
            except UnsatisfiableQuantileError:
                slot_by_size[size] = None
        return slot_by_size[size]

    plans: list[GroupPlan] = []
    for g in range(g_min, g_max + 1):
        sizes = _even_split(spec.n_total, g)
        per_size = {size: slot_for(size) for size in set(sizes)}
        if any(slot is None for slot in per_size.values()):
            plans.append(GroupPlan.infeasible(g, sizes, q))
            continue
        total = sum(per_size[size] for size in sizes)
        largest = per_size[sizes[0]]
        plans.append(
            GroupPlan(
                group_count=g,
                group_sizes=sizes,
                per_group_slot=largest,
                total_reserved=total,
                quantile_target=q,
                standard_compliant=largest <= MAX_RAW_SLOT_US,
            )
        )

    feasible = [plan for plan in plans if plan.feasible]
    if not feasible:
        raise UnsatisfiableQuantileError(q, best_achievable)
    best = min(feasible, key=lambda plan: (plan.total_reserved, plan.group_count))
    return plans, best
