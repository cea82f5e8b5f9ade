"""Scenario configuration and validator-set construction."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .errors import ConfigError
from .geodata import CityRegistry, LatencyMatrix, canonical_city
from .governance import EpochConfig
from .metrics import ValidatorProfile

VOTE_RACE_MODES = ("ordered", "random")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation run. Validator ids follow the distribution's key order."""

    distribution: Mapping[str, int]
    delta_ms: float = 300_000.0
    epoch_count: int = 5
    pi: float = 5.0
    timeout_ms: float = 50_000.0
    processing_delay_ms: float = 1.0
    jitter_ms: float = 0.0
    seed: int = 0
    solution_enabled: bool = False
    jail_duration: int = 1
    vote_race: str = "ordered"
    cities_path: Optional[str] = None
    pings_path: Optional[str] = None

    def __post_init__(self):
        dist = {}
        for city, count in dict(self.distribution).items():
            key = canonical_city(city)
            if not key:
                raise ConfigError("distribution has an empty city name")
            if key in dist:
                raise ConfigError(f"city {key!r} appears twice in the distribution")
            if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                raise ConfigError(f"validator count for {key!r} must be a positive integer")
            dist[key] = count
        object.__setattr__(self, "distribution", dist)
        if self.size < 4:
            raise ConfigError(f"a scenario needs at least 4 validators, got {self.size}")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        if self.processing_delay_ms < 0 or self.jitter_ms < 0:
            raise ConfigError("delays must be non-negative")
        if self.vote_race not in VOTE_RACE_MODES:
            raise ConfigError(f"vote_race must be one of {VOTE_RACE_MODES}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.epoch_config()

    @property
    def size(self) -> int:
        return sum(self.distribution.values())

    def epoch_config(self) -> EpochConfig:
        try:
            return EpochConfig(delta_ms=self.delta_ms, pi=self.pi, epoch_count=self.epoch_count,
                               jail_duration=self.jail_duration,
                               solution_enabled=self.solution_enabled)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["distribution"] = dict(self.distribution)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "distribution" not in data:
            raise ConfigError("config has no distribution")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)


def build_validators(distribution: Mapping[str, int], registry: CityRegistry,
                     matrix: Optional[LatencyMatrix] = None) -> list[ValidatorProfile]:
    validators = []
    for city, count in distribution.items():
        if city not in registry:
            raise ConfigError(f"city {city!r} is not in the cities dataset")
        if matrix is not None and city not in matrix:
            raise ConfigError(f"city {city!r} has no complete latency data")
        rec = registry[city]
        for _ in range(count):
            validators.append(ValidatorProfile(len(validators), rec.city_id, rec.coords))
    return validators
