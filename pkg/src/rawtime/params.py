"""Contention and slot-timing configuration shared by the model, simulator and planner."""

from __future__ import annotations

from dataclasses import dataclass, replace


class ConfigurationError(ValueError):
    """Raised when contention or timing parameters are inconsistent."""


def _as_positive_int(value, name: str) -> int:
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigurationError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise ConfigurationError(f"{name} must be >= 1, got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Backoff configuration for a group of stations contending in one RAW slot.

    ``epsilon``, ``t_max_cap`` and ``prune_floor`` control the chain
    computation only: iteration stops once the absorbed-plus-dropped mass
    reaches ``1 - epsilon`` (or at ``t_max_cap`` virtual slots), and carried
    states below ``prune_floor`` are dropped into an explicitly accounted
    deficit.  ``t_max_cap=None`` selects ``50 * cw_max * retry_limit``.
    """

    n_stations: int
    cw_min: int
    cw_max: int
    retry_limit: int
    epsilon: float = 1e-6
    t_max_cap: int | None = None
    prune_floor: float = 1e-12

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_stations", _as_positive_int(self.n_stations, "n_stations"))
        object.__setattr__(self, "cw_min", _as_positive_int(self.cw_min, "cw_min"))
        object.__setattr__(self, "cw_max", _as_positive_int(self.cw_max, "cw_max"))
        object.__setattr__(self, "retry_limit", _as_positive_int(self.retry_limit, "retry_limit"))
        if self.cw_max < self.cw_min:
            raise ConfigurationError(f"cw_max={self.cw_max} < cw_min={self.cw_min}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.prune_floor < 1.0:
            raise ConfigurationError(f"prune_floor must lie in [0, 1), got {self.prune_floor}")
        cap = self.t_max_cap
        if cap is None:
            cap = 50 * self.cw_max * self.retry_limit
        object.__setattr__(self, "t_max_cap", _as_positive_int(cap, "t_max_cap"))

    def contention_windows(self) -> tuple[int, ...]:
        """Window sizes CW_0..CW_{RL-1}: doubled per failed attempt, capped at cw_max."""
        windows = [self.cw_min]
        for _ in range(1, self.retry_limit):
            windows.append(min(self.cw_max, 2 * windows[-1]))
        return tuple(windows)

    def max_backoff_slots(self) -> int:
        """Last virtual slot by which every station has resolved, plus one.

        A station on attempt ``r`` must transmit within its window, so no
        transmission can occur at slot ``sum(contention_windows())`` or later.
        """
        return sum(self.contention_windows())

    def with_stations(self, n_stations: int) -> "ModelParams":
        return replace(self, n_stations=n_stations)


@dataclass(frozen=True)
class SlotDurations:
    """Real-time lengths of the three virtual-slot types, in whole microseconds.

    Integer microseconds keep every reachable completion time on an exact
    grid, so equal-length trajectories aggregate into a single atom instead
    of smearing across float-rounded neighbours.
    """

    t_empty: int
    t_success: int
    t_collision: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "t_empty", _as_positive_int(self.t_empty, "t_empty"))
        object.__setattr__(self, "t_success", _as_positive_int(self.t_success, "t_success"))
        object.__setattr__(self, "t_collision", _as_positive_int(self.t_collision, "t_collision"))
        if self.t_success < self.t_empty:
            raise ConfigurationError("t_success must be >= t_empty")
        if self.t_collision < self.t_empty:
            raise ConfigurationError("t_collision must be >= t_empty")


# 802.11ah reference setup: 52 us backoff slot, 100-byte frames at MCS0 on a
# 2 MHz channel, so a successful or collided exchange occupies ~42 backoff
# slots.  Used by the CLI --paper-params preset.
AH_SLOT_DURATIONS = SlotDurations(t_empty=52, t_success=42 * 52, t_collision=42 * 52)

AH_CW_MIN = 16
AH_CW_MAX = 1024
AH_RETRY_LIMIT = 7


def ah_params(n_stations: int, **overrides) -> ModelParams:
    """ModelParams with the 802.11ah reference contention settings."""
    base = dict(cw_min=AH_CW_MIN, cw_max=AH_CW_MAX, retry_limit=AH_RETRY_LIMIT)
    base.update(overrides)
    return ModelParams(n_stations=n_stations, **base)
