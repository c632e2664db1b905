"""Per-slot transmission probabilities for truncated binary exponential backoff.

Under the large-population approximation every transmission collides, which
closes the recursion for a single station:

* ``a[t, r]`` -- probability that the station transmits in virtual slot ``t``
  while on retry count ``r``.  Fresh backoff is uniform over the initial
  window; after a collision in slot ``i`` the retransmission falls uniformly
  on one of the next CW_r slots, giving a sliding-window convolution.
* ``b[t, r]`` -- probability that the station enters slot ``t`` with retry
  count ``r`` and has not transmitted since reaching that count.  The sums
  run over slots ``0..t-1``: slot ``t`` itself has not happened yet, which is
  what forces ``p_tx`` to 1 on the last slot of a window.
* ``p_tx[t, r] = a / b`` -- conditional transmission probability, 0 where
  ``b`` vanishes (such states carry no probability mass).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ConfigurationError, ModelParams


@dataclass(frozen=True, eq=False)
class TxProbTable:
    """Arrays indexed ``[t, r]`` for ``t < t_extent`` and ``r < retry_limit``."""

    a: np.ndarray
    b: np.ndarray
    p_tx: np.ndarray
    t_extent: int

    def tx_prob(self, t: int, r: int) -> float:
        """Conditional transmission probability at slot ``t``, retry count ``r``."""
        if not 0 <= t < self.t_extent:
            raise IndexError(f"slot {t} outside materialized range [0, {self.t_extent})")
        return float(self.p_tx[t, r])

    def p_tx_row(self, t: int) -> np.ndarray:
        if not 0 <= t < self.t_extent:
            raise IndexError(f"slot {t} outside materialized range [0, {self.t_extent})")
        return self.p_tx[t]


def build_tx_prob_table(params: ModelParams, t_extent: int) -> TxProbTable:
    """Materialize ``a``, ``b`` and ``p_tx`` for slots ``0..t_extent-1``.

    The recursion is evaluated with prefix sums, so the cost is
    ``O(t_extent * retry_limit)``.
    """
    if t_extent < 1:
        raise ConfigurationError(f"t_extent must be >= 1, got {t_extent}")
    windows = params.contention_windows()
    rl = params.retry_limit
    cw0 = windows[0]
    t_idx = np.arange(t_extent)

    a = np.zeros((t_extent, rl))
    a[: min(cw0, t_extent), 0] = 1.0 / cw0
    for r in range(1, rl):
        cw_r = windows[r]
        prev_prefix = np.concatenate(([0.0], np.cumsum(a[:, r - 1])))
        lo = np.maximum(t_idx - cw_r, 0)
        a[:, r] = (prev_prefix[t_idx] - prev_prefix[lo]) / cw_r

    b = np.zeros_like(a)
    b[:, 0] = np.maximum(1.0 - np.concatenate(([0.0], np.cumsum(a[:, 0])))[:t_extent], 0.0)
    for r in range(1, rl):
        entered_minus_left = np.concatenate(([0.0], np.cumsum(a[:, r - 1] - a[:, r])))
        b[:, r] = np.maximum(entered_minus_left[:t_extent], 0.0)

    p_tx = np.zeros_like(a)
    reachable = b > 0.0
    p_tx[reachable] = np.clip(a[reachable] / b[reachable], 0.0, 1.0)

    for arr in (a, b, p_tx):
        arr.setflags(write=False)
    return TxProbTable(a=a, b=b, p_tx=p_tx, t_extent=t_extent)
