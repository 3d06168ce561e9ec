"""Pipeline configuration, JSON helpers, and the run manifest.

A config JSON fully determines a pipeline run: every tunable that affects
outputs lives here, so the manifest (resolved config + its hash + package
version) makes reruns reproducible byte for byte under a fixed seed.
Artifacts carry no timestamps for the same reason.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from . import __version__
from .fixtures import OBJECT_CATALOG
from .forcemap import (BONUS_BETA, BONUS_SIGMA, PEAK_PROMINENCE,
                       DEFAULT_MATERIALS, MaterialModel)
from .gripsim import ImpedanceParams


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class GridConfig:
    layers: int = 32
    bins: int = 64
    probes: int = 3
    n_edge: int = 2


@dataclass(frozen=True)
class ForceConfig:
    beta: float = BONUS_BETA
    sigma_b: float = BONUS_SIGMA
    prominence: float = PEAK_PROMINENCE


@dataclass(frozen=True)
class RankingConfig:
    alpha: float = 0.1
    tau_f: float = 0.5
    top_m: int = 5


@dataclass(frozen=True)
class ObjectPhysics:
    mass: float
    mu: float


@dataclass(frozen=True)
class PipelineConfig:
    mesh: str = ""
    candidates: str = ""
    lexicon: str | None = None
    out: str = "out"
    scale: float | None = None
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    force: ForceConfig = field(default_factory=ForceConfig)
    ranking: RankingConfig = field(default_factory=RankingConfig)
    impedance: ImpedanceParams = field(default_factory=ImpedanceParams)
    grip_duration: float = 3.0
    materials: dict = field(default_factory=dict)   # object_id -> model dict
    physics: dict = field(default_factory=dict)     # object_id -> mass/mu

    def material_for(self, object_id: str) -> MaterialModel:
        if object_id in self.materials:
            return MaterialModel.from_dict(self.materials[object_id])
        entry = OBJECT_CATALOG.get(object_id)
        if entry is None:
            raise ConfigError(f"no material known for object {object_id!r}")
        base = DEFAULT_MATERIALS[entry["material"]]
        return replace(base, c_base=entry["calibrated_c_base"], k_m=1.0)

    def physics_for(self, object_id: str) -> ObjectPhysics:
        if object_id in self.physics:
            d = self.physics[object_id]
            return ObjectPhysics(mass=float(d["mass"]), mu=float(d["mu"]))
        entry = OBJECT_CATALOG.get(object_id)
        if entry is None:
            raise ConfigError(f"no physics known for object {object_id!r}")
        return ObjectPhysics(mass=entry["mass"], mu=entry["mu"])

    def grip_params_for(self, object_id: str) -> ImpedanceParams:
        entry = OBJECT_CATALOG.get(object_id, {})
        overrides = entry.get("grip_params", {})
        return replace(self.impedance, **overrides) if overrides \
            else self.impedance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["impedance"] = self.impedance.to_dict()
        return d

    @staticmethod
    def from_dict(data: dict) -> "PipelineConfig":
        known = {}
        for key in ("mesh", "candidates", "lexicon", "out", "scale", "seed",
                    "grip_duration", "materials", "physics"):
            if key in data:
                known[key] = data[key]
        if "grid" in data:
            known["grid"] = GridConfig(**data["grid"])
        if "force" in data:
            known["force"] = ForceConfig(**data["force"])
        if "ranking" in data:
            known["ranking"] = RankingConfig(**data["ranking"])
        if "impedance" in data:
            known["impedance"] = ImpedanceParams.from_dict(data["impedance"])
        unknown = set(data) - {
            "mesh", "candidates", "lexicon", "out", "scale", "seed",
            "grip_duration", "materials", "physics", "grid", "force",
            "ranking", "impedance"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**known)

    @staticmethod
    def load(path: str) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return PipelineConfig.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def dump_json(data: dict, path: str) -> None:
    """Canonical JSON artifact writer: sorted keys, stable formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(config: PipelineConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def build_manifest(config: PipelineConfig, command: dict,
                   artifacts: dict[str, str]) -> dict:
    return {
        "package": "gripmap",
        "version": __version__,
        "config": config.to_dict(),
        "config_sha256": config_hash(config),
        "command": command,
        "artifacts": artifacts,
    }
