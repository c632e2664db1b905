"""Layer-by-layer advance of the two absorbing chains.

Process A tracks one tagged station through states ``(t, c, s, r)``: virtual
slot ``t``, collision slots ``c``, success slots ``s`` and the tagged
station's retry count ``r``.  It absorbs when the tagged station delivers its
frame or exhausts the retry limit.  Process B tracks the aggregate
``(t, c, s)`` and absorbs once all ``n_stations`` have delivered (``s == N``).

Both steppers take the full layer at time ``t`` and produce the layer at
``t + 1``.  Layers store their sparse mass in parallel arrays so a step is a
handful of vectorized operations followed by a scatter-add, which keeps runs
with hundreds of contending stations tractable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams
from .txprob import TxProbTable

_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0, dtype=np.float64)


def _kahan_add(total: float, comp: float, x: float) -> tuple[float, float]:
    """One compensated-summation update; keeps cumulative totals honest over
    thousands of steps."""
    y = x - comp
    t = total + y
    return t, (t - total) - y


@dataclass(eq=False)
class StateLayerA:
    """Tagged-station layer at one model time.

    ``absorbed_success`` holds the success absorptions recorded by the most
    recent step, keyed by the origin state ``(t, c, s)``; cumulative totals
    live in the scalar fields so long runs do not accumulate per-state
    records.
    """

    t: int
    c: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    s: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    r: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    p: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    new_success_c: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    new_success_s: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    new_success_p: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    absorbed_success_total: float = 0.0
    absorbed_failure: float = 0.0
    dropped_mass: float = 0.0
    _succ_comp: float = 0.0
    _fail_comp: float = 0.0
    _drop_comp: float = 0.0

    @classmethod
    def initial(cls) -> "StateLayerA":
        return cls(
            t=0,
            c=np.zeros(1, dtype=np.int64),
            s=np.zeros(1, dtype=np.int64),
            r=np.zeros(1, dtype=np.int64),
            p=np.ones(1, dtype=np.float64),
        )

    @classmethod
    def from_mass(cls, t: int, mass: dict[tuple[int, int, int], float]) -> "StateLayerA":
        keys = sorted(mass)
        return cls(
            t=t,
            c=np.array([k[0] for k in keys], dtype=np.int64),
            s=np.array([k[1] for k in keys], dtype=np.int64),
            r=np.array([k[2] for k in keys], dtype=np.int64),
            p=np.array([mass[k] for k in keys], dtype=np.float64),
        )

    @property
    def mass(self) -> dict[tuple[int, int, int], float]:
        return {
            (int(c), int(s), int(r)): float(p)
            for c, s, r, p in zip(self.c, self.s, self.r, self.p)
        }

    @property
    def absorbed_success(self) -> dict[tuple[int, int, int], float]:
        """Success absorptions of the last step, keyed (origin t, c, s)."""
        t0 = self.t - 1
        return {
            (t0, int(c), int(s)): float(p)
            for c, s, p in zip(self.new_success_c, self.new_success_s, self.new_success_p)
        }

    def carried_mass(self) -> float:
        return math.fsum(self.p.tolist())


@dataclass(eq=False)
class StateLayerB:
    """Aggregate layer at one model time; absorptions of the most recent step
    are keyed by their origin ``(t, c)``."""

    t: int
    c: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    s: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    p: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    new_absorbed_c: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    new_absorbed_p: np.ndarray = field(default_factory=lambda: _EMPTY_F)
    absorbed_total: float = 0.0
    dropped_mass: float = 0.0
    _abs_comp: float = 0.0
    _drop_comp: float = 0.0

    @classmethod
    def initial(cls) -> "StateLayerB":
        return cls(
            t=0,
            c=np.zeros(1, dtype=np.int64),
            s=np.zeros(1, dtype=np.int64),
            p=np.ones(1, dtype=np.float64),
        )

    @classmethod
    def from_mass(cls, t: int, mass: dict[tuple[int, int], float]) -> "StateLayerB":
        keys = sorted(mass)
        return cls(
            t=t,
            c=np.array([k[0] for k in keys], dtype=np.int64),
            s=np.array([k[1] for k in keys], dtype=np.int64),
            p=np.array([mass[k] for k in keys], dtype=np.float64),
        )

    @property
    def mass(self) -> dict[tuple[int, int], float]:
        return {(int(c), int(s)): float(p) for c, s, p in zip(self.c, self.s, self.p)}

    @property
    def absorbed(self) -> dict[tuple[int, int], float]:
        t0 = self.t - 1
        return {(t0, int(c)): float(p) for c, p in zip(self.new_absorbed_c, self.new_absorbed_p)}

    def carried_mass(self) -> float:
        return math.fsum(self.p.tolist())


def _cell_mixture(
    layer: StateLayerA, table: TxProbTable, n_stations: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-(c, s) conditional transmission probability, mixing over retry counts.

    Returns (sorted packed cell keys, per-cell probability, per-state inverse
    index, per-state tagged transmission probability q).
    """
    q = table.p_tx_row(layer.t)[layer.r]
    cell = layer.c * n_stations + layer.s
    uniq, inverse = np.unique(cell, return_inverse=True)
    den = np.bincount(inverse, weights=layer.p, minlength=uniq.size)
    num = np.bincount(inverse, weights=layer.p * q, minlength=uniq.size)
    prob = np.zeros_like(den)
    ok = den > 0.0
    prob[ok] = np.clip(num[ok] / den[ok], 0.0, 1.0)
    return uniq, prob, inverse, q


def cond_tx_prob_state(
    layer: StateLayerA, table: TxProbTable, t: int, c: int, s: int
) -> float:
    """Probability that a not-yet-finished station transmits in slot ``t``
    given the aggregate state ``(t, c, s)``; 0 for unreachable states."""
    if t != layer.t:
        raise ValueError(f"layer holds time {layer.t}, queried for {t}")
    sel = (layer.c == c) & (layer.s == s)
    den = math.fsum(layer.p[sel].tolist())
    if den <= 0.0:
        return 0.0
    q = table.p_tx_row(t)[layer.r[sel]]
    num = math.fsum((layer.p[sel] * q).tolist())
    return min(max(num / den, 0.0), 1.0)


def _scatter_add(keys: np.ndarray, masses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(keys, return_inverse=True)
    return uniq, np.bincount(inverse, weights=masses, minlength=uniq.size)


def step_process_a(
    layer: StateLayerA, table: TxProbTable, params: ModelParams
) -> StateLayerA:
    """Advance the tagged-station layer one virtual slot.

    Routing from each carried state, with q the tagged station's conditional
    transmission probability and the peer slot-type probabilities computed
    from the (c, s)-cell mixture:

    * empty slot, tagged silent          -> (t+1, c, s, r)
    * tagged transmits, peers silent     -> success absorption
    * one peer succeeds                  -> (t+1, c, s+1, r)
    * tagged transmits and is not alone  -> (t+1, c+1, s, r+1) or retry-limit failure
    * peers collide without tagged       -> (t+1, c+1, s, r)
    """
    n = params.n_stations
    rl = params.retry_limit
    if layer.p.size == 0:
        return StateLayerA(
            t=layer.t + 1,
            absorbed_success_total=layer.absorbed_success_total,
            absorbed_failure=layer.absorbed_failure,
            dropped_mass=layer.dropped_mass,
            _succ_comp=layer._succ_comp,
            _fail_comp=layer._fail_comp,
            _drop_comp=layer._drop_comp,
        )

    _, cell_prob, inverse, q = _cell_mixture(layer, table, n)
    peer_prob = cell_prob[inverse]
    peers = n - layer.s - 1
    silent = 1.0 - peer_prob
    pi_empty = silent**peers
    pi_peer_succ = np.where(
        peers > 0, peers * peer_prob * silent ** np.maximum(peers - 1, 0), 0.0
    )
    pi_peer_coll = np.maximum(1.0 - pi_empty - pi_peer_succ, 0.0)

    m = layer.p
    stay = m * (1.0 - q) * pi_empty
    succeed = m * q * pi_empty
    peer_succ = m * (1.0 - q) * pi_peer_succ
    coll_tagged = m * q * (1.0 - pi_empty)
    coll_other = m * (1.0 - q) * pi_peer_coll

    dest_c, dest_s, dest_r, dest_m = [], [], [], []

    def _route(mass: np.ndarray, dc: int, ds: int, dr: int, sel=None) -> None:
        nz = np.flatnonzero(mass > 0.0) if sel is None else sel[mass[sel] > 0.0]
        if nz.size == 0:
            return
        dest_c.append(layer.c[nz] + dc)
        dest_s.append(layer.s[nz] + ds)
        dest_r.append(layer.r[nz] + dr)
        dest_m.append(mass[nz])

    _route(stay, 0, 0, 0)
    _route(peer_succ, 0, 1, 0)
    _route(coll_other, 1, 0, 0)
    retryable = np.flatnonzero(layer.r + 1 < rl)
    exhausted = np.flatnonzero(layer.r + 1 >= rl)
    _route(coll_tagged, 1, 0, 1, sel=retryable)
    new_failure = float(np.sum(coll_tagged[exhausted]))

    dropped, drop_comp = layer.dropped_mass, layer._drop_comp
    if dest_m:
        key = (np.concatenate(dest_c) * n + np.concatenate(dest_s)) * rl + np.concatenate(dest_r)
        uniq, summed = _scatter_add(key, np.concatenate(dest_m))
        keep = summed >= params.prune_floor if params.prune_floor > 0.0 else summed > 0.0
        dropped, drop_comp = _kahan_add(dropped, drop_comp, float(np.sum(summed[~keep])))
        uniq, summed = uniq[keep], summed[keep]
        cs, out_r = uniq // rl, uniq % rl
        out_c, out_s = cs // n, cs % n
    else:
        out_c = out_s = out_r = _EMPTY_I
        summed = _EMPTY_F

    succ_nz = np.flatnonzero(succeed > 0.0)
    succ_key, succ_mass = _scatter_add(
        layer.c[succ_nz] * n + layer.s[succ_nz], succeed[succ_nz]
    )
    succ_total, succ_comp = _kahan_add(
        layer.absorbed_success_total, layer._succ_comp, float(np.sum(succ_mass))
    )
    fail_total, fail_comp = _kahan_add(layer.absorbed_failure, layer._fail_comp, new_failure)

    return StateLayerA(
        t=layer.t + 1,
        c=out_c,
        s=out_s,
        r=out_r,
        p=summed,
        new_success_c=succ_key // n,
        new_success_s=succ_key % n,
        new_success_p=succ_mass,
        absorbed_success_total=succ_total,
        absorbed_failure=fail_total,
        dropped_mass=dropped,
        _succ_comp=succ_comp,
        _fail_comp=fail_comp,
        _drop_comp=drop_comp,
    )


def step_process_b(
    layer: StateLayerB,
    table: TxProbTable,
    layer_a: StateLayerA,
    params: ModelParams,
) -> StateLayerB:
    """Advance the aggregate layer one virtual slot.

    The per-(c, s) transmission probability comes from process A's layer at
    the same time; aggregate cells that process A assigns no mass get
    probability 0 and self-loop through empty slots until mass arrives (or
    never, once process A has fully resolved -- that residue is the
    some-station-failed tail).
    """
    n = params.n_stations
    if layer_a.t != layer.t:
        raise ValueError(f"process A layer at t={layer_a.t}, process B at t={layer.t}")
    if layer.p.size == 0:
        return StateLayerB(
            t=layer.t + 1,
            absorbed_total=layer.absorbed_total,
            dropped_mass=layer.dropped_mass,
            _abs_comp=layer._abs_comp,
            _drop_comp=layer._drop_comp,
        )

    if layer_a.p.size:
        a_cells, a_prob, _, _ = _cell_mixture(layer_a, table, n)
        cell = layer.c * n + layer.s
        pos = np.searchsorted(a_cells, cell)
        pos_clipped = np.minimum(pos, a_cells.size - 1)
        found = a_cells[pos_clipped] == cell
        peer_prob = np.where(found, a_prob[pos_clipped], 0.0)
    else:
        peer_prob = np.zeros_like(layer.p)

    remaining = n - layer.s  # >= 1 while carried
    silent = 1.0 - peer_prob
    pi_empty = silent**remaining
    pi_succ = remaining * peer_prob * silent ** (remaining - 1)
    pi_coll = np.maximum(1.0 - pi_empty - pi_succ, 0.0)

    m = layer.p
    empty = m * pi_empty
    succ = m * pi_succ
    coll = m * pi_coll

    finishing = layer.s + 1 == n
    absorbed = succ * finishing
    succ_carried = succ * ~finishing

    dest_c, dest_s, dest_m = [], [], []

    def _route(mass: np.ndarray, dc: int, ds: int) -> None:
        nz = np.flatnonzero(mass > 0.0)
        if nz.size == 0:
            return
        dest_c.append(layer.c[nz] + dc)
        dest_s.append(layer.s[nz] + ds)
        dest_m.append(mass[nz])

    _route(empty, 0, 0)
    _route(succ_carried, 0, 1)
    _route(coll, 1, 0)

    dropped, drop_comp = layer.dropped_mass, layer._drop_comp
    if dest_m:
        key = np.concatenate(dest_c) * n + np.concatenate(dest_s)
        uniq, summed = _scatter_add(key, np.concatenate(dest_m))
        keep = summed >= params.prune_floor if params.prune_floor > 0.0 else summed > 0.0
        dropped, drop_comp = _kahan_add(dropped, drop_comp, float(np.sum(summed[~keep])))
        uniq, summed = uniq[keep], summed[keep]
        out_c, out_s = uniq // n, uniq % n
    else:
        out_c = out_s = _EMPTY_I
        summed = _EMPTY_F

    abs_nz = np.flatnonzero(absorbed > 0.0)
    abs_key, abs_mass = _scatter_add(layer.c[abs_nz], absorbed[abs_nz])
    abs_total, abs_comp = _kahan_add(layer.absorbed_total, layer._abs_comp, float(np.sum(abs_mass)))

    return StateLayerB(
        t=layer.t + 1,
        c=out_c,
        s=out_s,
        p=summed,
        new_absorbed_c=abs_key,
        new_absorbed_p=abs_mass,
        absorbed_total=abs_total,
        dropped_mass=dropped,
        _abs_comp=abs_comp,
        _drop_comp=drop_comp,
    )
