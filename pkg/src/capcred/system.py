"""Baseline system model: fleet, storage, load, and perturbation directions.

A study is defined by a ``SystemSpec`` (the baseline fleet and load
trajectory) plus a ``Direction`` describing which capacity-availability
perturbation is being accredited. Specs are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

GeneratorKind = ("thermal", "profile", "perfect")


class SpecError(ValueError):
    """A system spec failed validation; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _check_finite(path: str, value: float, minimum: float | None = None) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise SpecError(path, "must be finite")
    if minimum is not None and value < minimum:
        raise SpecError(path, f"must be >= {minimum}")
    return value


@dataclass(frozen=True)
class GeneratorSpec:
    """One generating unit: thermal (Bernoulli outages), profile, or perfect."""

    id: str
    nameplate_mw: float
    kind: str
    for_rate: float | None = None
    profile_id: str | None = None

    def __post_init__(self):
        path = f"generators[{self.id}]"
        if not self.id:
            raise SpecError("generators[].id", "must be non-empty")
        _check_finite(f"{path}.nameplate_mw", self.nameplate_mw, minimum=0.0)
        if self.kind not in GeneratorKind:
            raise SpecError(f"{path}.kind", f"unknown kind {self.kind!r}")
        if self.kind == "thermal":
            if self.for_rate is None:
                raise SpecError(f"{path}.for_rate", "required for thermal units")
            if not 0.0 <= self.for_rate <= 1.0:
                raise SpecError(f"{path}.for_rate", "must lie in [0, 1]")
            if self.profile_id is not None:
                raise SpecError(f"{path}.profile_id", "not allowed for thermal units")
        elif self.kind == "profile":
            if not self.profile_id:
                raise SpecError(f"{path}.profile_id", "required for profile units")
            if self.for_rate is not None:
                raise SpecError(f"{path}.for_rate", "not allowed for profile units")
        else:  # perfect
            if self.for_rate is not None or self.profile_id is not None:
                raise SpecError(path, "perfect units take neither for_rate nor profile_id")


@dataclass(frozen=True)
class AvailabilityProfile:
    """Deterministic per-hour availability fractions for profile units."""

    id: str
    values: tuple[float, ...]

    def __post_init__(self):
        for h, v in enumerate(self.values):
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise SpecError(f"profiles[{self.id}].values[{h}]", "must lie in [0, 1]")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class StorageSpec:
    """Energy-limited storage dispatched by the greedy shortfall policy."""

    id: str
    power_mw: float
    energy_mwh: float
    efficiency_charge: float = 1.0
    efficiency_discharge: float = 1.0
    initial_soc_fraction: float = 1.0

    def __post_init__(self):
        path = f"storages[{self.id}]"
        _check_finite(f"{path}.power_mw", self.power_mw, minimum=0.0)
        _check_finite(f"{path}.energy_mwh", self.energy_mwh, minimum=0.0)
        for name in ("efficiency_charge", "efficiency_discharge"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise SpecError(f"{path}.{name}", "must lie in (0, 1]")
        if not 0.0 <= self.initial_soc_fraction <= 1.0:
            raise SpecError(f"{path}.initial_soc_fraction", "must lie in [0, 1]")

    def scaled(self, factor: float) -> "StorageSpec":
        """Scale power and energy together, preserving duration."""
        return replace(
            self,
            power_mw=self.power_mw * factor,
            energy_mwh=self.energy_mwh * factor,
        )


@dataclass(frozen=True)
class LoadTrajectory:
    values: tuple[float, ...]

    def __post_init__(self):
        for h, v in enumerate(self.values):
            _check_finite(f"load.values[{h}]", v, minimum=0.0)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class SystemSpec:
    """The baseline system: generators, storages, profiles, load, and horizon."""

    generators: tuple[GeneratorSpec, ...]
    storages: tuple[StorageSpec, ...]
    profiles: tuple[AvailabilityProfile, ...]
    load: LoadTrajectory
    horizon_hours: int
    hours_per_day: int = 24

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "storages", tuple(self.storages))
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if self.horizon_hours < 1:
            raise SpecError("horizon_hours", "must be at least 1")
        if self.hours_per_day < 1:
            raise SpecError("hours_per_day", "must be at least 1")
        if self.horizon_hours % self.hours_per_day != 0:
            raise SpecError(
                "horizon_hours",
                f"{self.horizon_hours} not divisible by hours_per_day {self.hours_per_day}",
            )
        if len(self.load.values) != self.horizon_hours:
            raise SpecError(
                "load.values",
                f"length {len(self.load.values)} != horizon_hours {self.horizon_hours}",
            )
        seen: set[str] = set()
        for g in self.generators:
            if g.id in seen:
                raise SpecError(f"generators[{g.id}].id", "duplicate resource id")
            seen.add(g.id)
        for s in self.storages:
            if s.id in seen:
                raise SpecError(f"storages[{s.id}].id", "duplicate resource id")
            seen.add(s.id)
        profile_ids = {p.id for p in self.profiles}
        if len(profile_ids) != len(self.profiles):
            raise SpecError("profiles[].id", "duplicate profile id")
        for p in self.profiles:
            if len(p.values) != self.horizon_hours:
                raise SpecError(
                    f"profiles[{p.id}].values",
                    f"length {len(p.values)} != horizon_hours {self.horizon_hours}",
                )
        for g in self.generators:
            if g.kind == "profile" and g.profile_id not in profile_ids:
                raise SpecError(
                    f"generators[{g.id}].profile_id",
                    f"unresolved profile {g.profile_id!r}",
                )

    @property
    def days(self) -> int:
        return self.horizon_hours // self.hours_per_day

    def profile_by_id(self, profile_id: str) -> AvailabilityProfile:
        for p in self.profiles:
            if p.id == profile_id:
                return p
        raise SpecError("profiles", f"unresolved profile {profile_id!r}")

    def generator_by_id(self, resource_id: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == resource_id:
                return g
        raise SpecError("generators", f"no generator {resource_id!r}")

    def storage_by_id(self, resource_id: str) -> StorageSpec:
        for s in self.storages:
            if s.id == resource_id:
                return s
        raise SpecError("storages", f"no storage {resource_id!r}")

    def load_array(self) -> np.ndarray:
        return self.load.as_array()


def scale_load(system: SystemSpec, multiplier: float) -> SystemSpec:
    """Multiply every hour of load by `multiplier`; everything else unchanged."""
    if not (math.isfinite(multiplier) and multiplier > 0.0):
        raise SpecError("multiplier", "must be a positive finite number")
    scaled = LoadTrajectory(tuple(v * multiplier for v in system.load.values))
    return replace(system, load=scaled)


# ---------------------------------------------------------------------------
# Perturbation directions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Direction:
    """A capacity-availability perturbation direction.

    kind is one of:
      perfect        -- one unit available every hour (the normalization base)
      resource       -- a unit's own availability draws (fleet member or candidate)
      profile_vector -- an explicit deterministic per-hour vector in [0, 1]
      portfolio      -- a joint addition of member directions
      storage_policy -- the policy-induced direction of one storage device
    """

    kind: str
    resource_id: str | None = None
    values: tuple[float, ...] | None = None
    members: tuple["Direction", ...] = ()

    def __post_init__(self):
        if self.kind not in ("perfect", "resource", "profile_vector", "portfolio", "storage_policy"):
            raise SpecError("direction.kind", f"unknown kind {self.kind!r}")
        if self.kind in ("resource", "storage_policy") and not self.resource_id:
            raise SpecError("direction.resource_id", f"required for {self.kind}")
        if self.kind == "profile_vector":
            if self.values is None:
                raise SpecError("direction.values", "required for profile_vector")
            for h, v in enumerate(self.values):
                if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                    raise SpecError(f"direction.values[{h}]", "must lie in [0, 1]")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "portfolio":
            if not self.members:
                raise SpecError("direction.members", "portfolio must be non-empty")
            keys = [(m.kind, m.resource_id, m.values) for m in self.members]
            if len(set(keys)) != len(keys):
                raise SpecError("direction.members", "portfolio members must be unique")

    def label(self) -> str:
        if self.kind == "perfect":
            return "perfect"
        if self.kind == "profile_vector":
            return "profile_vector"
        if self.kind == "portfolio":
            return "+".join(m.label() for m in self.members)
        return str(self.resource_id)


def perfect_direction() -> Direction:
    return Direction(kind="perfect")


def resource_direction(resource_id: str) -> Direction:
    return Direction(kind="resource", resource_id=resource_id)


def profile_direction(values) -> Direction:
    return Direction(kind="profile_vector", values=tuple(values))


def portfolio_direction(members) -> Direction:
    return Direction(kind="portfolio", members=tuple(members))


def storage_policy_direction(storage_id: str) -> Direction:
    return Direction(kind="storage_policy", resource_id=storage_id)


# ---------------------------------------------------------------------------
# JSON round trip (format documented in docs/system_spec_format.md)
# ---------------------------------------------------------------------------


def system_to_dict(system: SystemSpec) -> dict:
    out = {
        "horizon_hours": system.horizon_hours,
        "hours_per_day": system.hours_per_day,
        "generators": [],
        "storages": [],
        "profiles": [{"id": p.id, "values": list(p.values)} for p in system.profiles],
        "load": list(system.load.values),
    }
    for g in system.generators:
        entry: dict = {"id": g.id, "nameplate_mw": g.nameplate_mw, "kind": g.kind}
        if g.for_rate is not None:
            entry["for_rate"] = g.for_rate
        if g.profile_id is not None:
            entry["profile_id"] = g.profile_id
        out["generators"].append(entry)
    for s in system.storages:
        out["storages"].append(
            {
                "id": s.id,
                "power_mw": s.power_mw,
                "energy_mwh": s.energy_mwh,
                "efficiency_charge": s.efficiency_charge,
                "efficiency_discharge": s.efficiency_discharge,
                "initial_soc_fraction": s.initial_soc_fraction,
            }
        )
    return out


def system_from_dict(raw: dict) -> SystemSpec:
    def need(key: str, where: str = ""):
        if key not in raw:
            raise SpecError(where + key, "missing required key")
        return raw[key]

    generators = []
    for i, g in enumerate(need("generators")):
        if not isinstance(g, dict):
            raise SpecError(f"generators[{i}]", "must be an object")
        try:
            generators.append(
                GeneratorSpec(
                    id=g.get("id", ""),
                    nameplate_mw=g.get("nameplate_mw", float("nan")),
                    kind=g.get("kind", ""),
                    for_rate=g.get("for_rate"),
                    profile_id=g.get("profile_id"),
                )
            )
        except TypeError as exc:
            raise SpecError(f"generators[{i}]", str(exc)) from exc
    storages = []
    for i, s in enumerate(raw.get("storages", [])):
        storages.append(
            StorageSpec(
                id=s.get("id", ""),
                power_mw=s.get("power_mw", float("nan")),
                energy_mwh=s.get("energy_mwh", float("nan")),
                efficiency_charge=s.get("efficiency_charge", 1.0),
                efficiency_discharge=s.get("efficiency_discharge", 1.0),
                initial_soc_fraction=s.get("initial_soc_fraction", 1.0),
            )
        )
    profiles = [
        AvailabilityProfile(id=p.get("id", ""), values=tuple(p.get("values", ())))
        for p in raw.get("profiles", [])
    ]
    return SystemSpec(
        generators=tuple(generators),
        storages=tuple(storages),
        profiles=tuple(profiles),
        load=LoadTrajectory(tuple(need("load"))),
        horizon_hours=int(need("horizon_hours")),
        hours_per_day=int(raw.get("hours_per_day", 24)),
    )


def load_system_spec(path: str | Path) -> SystemSpec:
    """Load and fully validate a system spec JSON file."""
    path = Path(path)
    if not path.exists():
        raise SpecError(str(path), "file does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(str(path), f"parse failure: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecError(str(path), "top level must be a JSON object")
    return system_from_dict(raw)


def write_system_spec(system: SystemSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(system), indent=2) + "\n")
