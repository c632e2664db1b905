"""Discrete sub-probability distributions over real-time durations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class UnsatisfiableQuantileError(ValueError):
    """Requested quantile exceeds the distribution's total mass."""

    def __init__(self, q: float, total_mass: float):
        self.q = q
        self.total_mass = total_mass
        super().__init__(
            f"quantile {q} exceeds the achievable delivery probability "
            f"{total_mass:.12g}; lower the target or reduce the model's "
            f"epsilon/pruning deficit"
        )


@dataclass(frozen=True, eq=False)
class TimeDistribution:
    """Atoms of probability mass on integer-microsecond durations.

    ``total_mass`` may be below 1; the ``deficit`` collects failure
    probability plus any truncated or pruned tail.
    """

    durations: np.ndarray
    probabilities: np.ndarray
    total_mass: float = field(init=False)
    deficit: float = field(init=False)

    def __post_init__(self) -> None:
        durations = np.asarray(self.durations, dtype=np.int64)
        probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if durations.shape != probabilities.shape or durations.ndim != 1:
            raise ValueError("durations and probabilities must be matching 1-D arrays")
        if durations.size and np.any(np.diff(durations) <= 0):
            raise ValueError("durations must be strictly increasing")
        if np.any(probabilities <= 0.0):
            raise ValueError("atom probabilities must be positive")
        durations.setflags(write=False)
        probabilities.setflags(write=False)
        total = math.fsum(probabilities.tolist())
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "probabilities", probabilities)
        object.__setattr__(self, "total_mass", total)
        object.__setattr__(self, "deficit", 1.0 - total)

    @classmethod
    def from_atoms(cls, atoms: Mapping[int, float]) -> "TimeDistribution":
        items = sorted((int(d), float(p)) for d, p in atoms.items() if p > 0.0)
        durations = np.fromiter((d for d, _ in items), dtype=np.int64, count=len(items))
        probabilities = np.fromiter((p for _, p in items), dtype=np.float64, count=len(items))
        return cls(durations, probabilities)

    @classmethod
    def from_arrays(cls, durations: np.ndarray, probabilities: np.ndarray) -> "TimeDistribution":
        """Build from unsorted, possibly duplicated or zero-mass raw atoms."""
        durations = np.asarray(durations, dtype=np.int64)
        probabilities = np.asarray(probabilities, dtype=np.float64)
        uniq, inverse = np.unique(durations, return_inverse=True)
        summed = np.bincount(inverse, weights=probabilities, minlength=uniq.size)
        keep = summed > 0.0
        return cls(uniq[keep], summed[keep])

    @property
    def atoms(self) -> dict[int, float]:
        return {int(d): float(p) for d, p in zip(self.durations, self.probabilities)}

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.probabilities)

    def quantile(self, q: float) -> int:
        """Smallest duration whose cumulative mass reaches ``q``."""
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {q}")
        if q > self.total_mass:
            raise UnsatisfiableQuantileError(q, self.total_mass)
        cum = self.cumulative()
        idx = int(np.searchsorted(cum, q, side="left"))
        if idx >= self.durations.size:
            idx = self.durations.size - 1
        return int(self.durations[idx])

    def cdf_at(self, duration: int) -> float:
        """Probability of completion within ``duration`` microseconds."""
        idx = int(np.searchsorted(self.durations, duration, side="right"))
        return float(self.cumulative()[idx - 1]) if idx else 0.0

    def to_json_dict(self) -> dict:
        return {
            "atoms": {str(int(d)): float(p) for d, p in zip(self.durations, self.probabilities)},
            "total_mass": self.total_mass,
            "deficit": self.deficit,
        }

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("duration_us,probability\n")
            for d, p in zip(self.durations, self.probabilities):
                fh.write(f"{int(d)},{float(p)!r}\n")

    def write_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def distribution_quantile(dist: TimeDistribution, q: float) -> int:
    """Smallest duration tau with cumulative mass >= q (see TimeDistribution.quantile)."""
    return dist.quantile(q)


def load_distribution(path: Path | str) -> TimeDistribution:
    """Read a distribution file written by this package (.csv or .json)."""
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return TimeDistribution.from_atoms({int(k): float(v) for k, v in payload["atoms"].items()})
    atoms: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.split(",")[:2] != ["duration_us", "probability"]:
            raise ValueError(f"{path}: not a distribution CSV (header {header!r})")
        for line in fh:
            if not line.strip():
                continue
            dur, prob = line.split(",")[:2]
            atoms[int(dur)] = float(prob)
    return TimeDistribution.from_atoms(atoms)


def kolmogorov_distance(first: TimeDistribution, second: TimeDistribution) -> float:
    """Supremum absolute difference between the two cumulative distributions."""
    support = np.union1d(first.durations, second.durations)
    if support.size == 0:
        return 0.0

    def cdf_on(dist: TimeDistribution) -> np.ndarray:
        cum = np.concatenate(([0.0], dist.cumulative()))
        return cum[np.searchsorted(dist.durations, support, side="right")]

    return float(np.max(np.abs(cdf_on(first) - cdf_on(second))))


def atom_differences(first: TimeDistribution, second: TimeDistribution) -> dict[int, float]:
    """Signed per-atom probability differences on the union support."""
    a, b = first.atoms, second.atoms
    return {int(d): a.get(int(d), 0.0) - b.get(int(d), 0.0) for d in np.union1d(first.durations, second.durations)}


def dominant_peaks(
    dist: TimeDistribution, count: int, min_separation: int
) -> list[int]:
    """Durations of up to ``count`` highest-mass atoms, greedily kept at least
    ``min_separation`` microseconds apart, returned in increasing duration order.

    Ties in mass resolve toward the smaller duration, so the result is
    deterministic.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    order = np.lexsort((dist.durations, -dist.probabilities))
    chosen: list[int] = []
    for idx in order:
        d = int(dist.durations[idx])
        if all(abs(d - kept) >= min_separation for kept in chosen):
            chosen.append(d)
            if len(chosen) == count:
                break
    return sorted(chosen)


def merge_weighted(
    components: Iterable[tuple[float, TimeDistribution]]
) -> TimeDistribution:
    """Weighted superposition of distributions (weights need not sum to 1)."""
    taus = []
    masses = []
    for weight, dist in components:
        if weight <= 0.0:
            continue
        taus.append(dist.durations)
        masses.append(weight * dist.probabilities)
    if not taus:
        return TimeDistribution.from_atoms({})
    return TimeDistribution.from_arrays(np.concatenate(taus), np.concatenate(masses))
