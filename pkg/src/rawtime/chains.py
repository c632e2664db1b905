"""Full chain runs: interleaved process A/B stepping and duration extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .distribution import TimeDistribution
from .layers import StateLayerA, StateLayerB, step_process_a, step_process_b
from .params import ModelParams, SlotDurations
from .txprob import TxProbTable, build_tx_prob_table


def state_time(c: int, s: int, t: int, durations: SlotDurations) -> int:
    """Real time (microseconds) needed to traverse c collision, s success and
    t - c - s empty virtual slots."""
    if c < 0 or s < 0 or c + s > t:
        raise ValueError(f"inconsistent slot counts c={c}, s={s}, t={t}")
    return (
        c * durations.t_collision
        + s * durations.t_success
        + (t - c - s) * durations.t_empty
    )


class _AtomAccumulator:
    """Collects (duration, mass) batches; compacts periodically to bound memory."""

    def __init__(self, compact_above: int = 1_500_000):
        self._taus: list[np.ndarray] = []
        self._masses: list[np.ndarray] = []
        self._pending = 0
        self._compact_above = compact_above

    def add(self, taus: np.ndarray, masses: np.ndarray) -> None:
        if taus.size == 0:
            return
        self._taus.append(taus)
        self._masses.append(masses)
        self._pending += taus.size
        if self._pending > self._compact_above:
            self._compact()

    def _compact(self) -> None:
        taus = np.concatenate(self._taus)
        uniq, inverse = np.unique(taus, return_inverse=True)
        summed = np.bincount(inverse, weights=np.concatenate(self._masses), minlength=uniq.size)
        self._taus = [uniq]
        self._masses = [summed]
        self._pending = uniq.size

    def finish(self) -> TimeDistribution:
        if not self._taus:
            return TimeDistribution.from_atoms({})
        return TimeDistribution.from_arrays(
            np.concatenate(self._taus), np.concatenate(self._masses)
        )


@dataclass(frozen=True)
class ChainDiagnostics:
    """Run bookkeeping: where the probability mass ended up and why we stopped."""

    t_stop: int
    truncated: bool
    b_stalled: bool
    absorbed_success_a: float
    absorbed_failure_a: float
    unresolved_a: float  # pruned + still-carried tagged-station mass
    absorbed_b: float
    unresolved_b: float  # pruned + never-absorbing aggregate mass (failure tail)
    mass_error_a: float
    mass_error_b: float
    table_extent: int


class ChainResult(NamedTuple):
    p_a: TimeDistribution
    p_b: TimeDistribution | None
    p_fail_a: float
    diagnostics: ChainDiagnostics


def run_chains(
    params: ModelParams,
    durations: SlotDurations,
    *,
    compute_b: bool = True,
    table: TxProbTable | None = None,
) -> ChainResult:
    """Run both chains until absorbed-plus-dropped mass reaches ``1 - epsilon``.

    Success absorption of the tagged station from state ``(t, c, s)`` lands at
    duration ``state_time(c, s + 1, t + 1)`` -- its own successful slot counts.
    Aggregate absorption from ``(t, c, N - 1)`` lands at
    ``state_time(c, N, t + 1)``.

    The loop also stops, with the remainder booked as deficit, when no further
    transmission is possible: every station resolves within
    ``params.max_backoff_slots()`` virtual slots, after which process B's
    remaining mass is exactly the some-station-failed tail and can never
    absorb.  Hitting ``t_max_cap`` earlier is reported via
    ``diagnostics.truncated``.
    """
    n = params.n_stations
    support = params.max_backoff_slots()
    cap = params.t_max_cap
    if table is None:
        table = build_tx_prob_table(params, min(cap, support) + 1)

    te, ts, tc = durations.t_empty, durations.t_success, durations.t_collision

    layer_a = StateLayerA.initial()
    layer_b = StateLayerB.initial() if compute_b else None
    atoms_a = _AtomAccumulator()
    atoms_b = _AtomAccumulator()

    threshold = 1.0 - params.epsilon
    truncated = False
    b_stalled = False

    while True:
        t = layer_a.t
        resolved_a = (
            layer_a.absorbed_success_total + layer_a.absorbed_failure + layer_a.dropped_mass
        )
        done_a = resolved_a >= threshold or layer_a.p.size == 0
        if compute_b:
            assert layer_b is not None
            done_b = layer_b.absorbed_total + layer_b.dropped_mass >= threshold
        else:
            done_b = True
        if done_a and done_b:
            break
        if t >= cap:
            truncated = True
            break
        if layer_a.p.size == 0 or t >= support:
            # No station can transmit any more; process B's leftover mass is
            # the tail where at least one station failed.
            b_stalled = compute_b and not done_b
            break

        next_a = step_process_a(layer_a, table, params)
        if compute_b:
            layer_b = step_process_b(layer_b, table, layer_a, params)
            if layer_b.new_absorbed_p.size:
                c_arr = layer_b.new_absorbed_c
                taus = c_arr * tc + n * ts + (t + 1 - c_arr - n) * te
                atoms_b.add(taus, layer_b.new_absorbed_p)
        if next_a.new_success_p.size:
            c_arr, s_arr = next_a.new_success_c, next_a.new_success_s
            taus = c_arr * tc + (s_arr + 1) * ts + (t - c_arr - s_arr) * te
            atoms_a.add(taus, next_a.new_success_p)
        layer_a = next_a

    p_a = atoms_a.finish()
    residual_a = layer_a.carried_mass() + layer_a.dropped_mass
    p_fail_a = layer_a.absorbed_failure
    mass_error_a = abs(p_a.total_mass + p_fail_a + residual_a - 1.0)

    if compute_b:
        assert layer_b is not None
        p_b = atoms_b.finish()
        residual_b = layer_b.carried_mass() + layer_b.dropped_mass
        mass_error_b = abs(p_b.total_mass + residual_b - 1.0)
        absorbed_b = layer_b.absorbed_total
    else:
        p_b = None
        residual_b = 0.0
        mass_error_b = 0.0
        absorbed_b = 0.0

    diagnostics = ChainDiagnostics(
        t_stop=layer_a.t,
        truncated=truncated,
        b_stalled=b_stalled,
        absorbed_success_a=layer_a.absorbed_success_total,
        absorbed_failure_a=p_fail_a,
        unresolved_a=residual_a,
        absorbed_b=absorbed_b,
        unresolved_b=residual_b,
        mass_error_a=mass_error_a,
        mass_error_b=mass_error_b,
        table_extent=table.t_extent,
    )
    return ChainResult(p_a=p_a, p_b=p_b, p_fail_a=p_fail_a, diagnostics=diagnostics)
