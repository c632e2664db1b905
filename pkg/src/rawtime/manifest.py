"""Reproducibility sidecars: every output file gets a manifest of exact inputs."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .params import ModelParams, SlotDurations

#: Physical parameters that must agree for two outputs to be comparable.
_MATCH_KEYS = ("n_stations", "cw_min", "cw_max", "retry_limit")


@dataclass(frozen=True)
class RunManifest:
    command: str
    artifact: str  # e.g. "pa", "pb", "groups"
    source: str  # "model" | "simulation" | "planner"
    params: dict
    durations: dict
    outputs: tuple[str, ...]
    wall_clock_s: float
    version: str = __version__
    seed: int | None = None
    runs: int | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        command: str,
        artifact: str,
        source: str,
        params: ModelParams,
        durations: SlotDurations,
        outputs: list[Path],
        wall_clock_s: float,
        seed: int | None = None,
        runs: int | None = None,
        extra: dict | None = None,
    ) -> "RunManifest":
        return cls(
            command=command,
            artifact=artifact,
            source=source,
            params=asdict(params),
            durations=asdict(durations),
            outputs=tuple(str(p) for p in outputs),
            wall_clock_s=wall_clock_s,
            seed=seed,
            runs=runs,
            extra=extra or {},
        )

    def write_for(self, data_path: Path | str) -> Path:
        path = manifest_path(data_path)
        payload = asdict(self)
        payload["created_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def manifest_path(data_path: Path | str) -> Path:
    return Path(str(data_path) + ".manifest.json")


def load_manifest(data_path: Path | str) -> dict:
    path = manifest_path(data_path)
    if not path.exists():
        raise FileNotFoundError(f"no manifest next to {data_path} (expected {path})")
    return json.loads(path.read_text(encoding="utf-8"))


def check_comparable(model_manifest: dict, sim_manifest: dict) -> list[str]:
    """Reasons the two outputs must not be compared; empty when comparable."""
    problems: list[str] = []
    if model_manifest.get("artifact") != sim_manifest.get("artifact"):
        problems.append(
            f"artifact kinds differ: {model_manifest.get('artifact')!r} "
            f"vs {sim_manifest.get('artifact')!r}"
        )
    for key in _MATCH_KEYS:
        a = model_manifest.get("params", {}).get(key)
        b = sim_manifest.get("params", {}).get(key)
        if a != b:
            problems.append(f"params.{key} differ: {a!r} vs {b!r}")
    if model_manifest.get("durations") != sim_manifest.get("durations"):
        problems.append(
            f"slot durations differ: {model_manifest.get('durations')!r} "
            f"vs {sim_manifest.get('durations')!r}"
        )
    return problems
