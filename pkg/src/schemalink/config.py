"""Run configuration: one JSON file holding paths and all tunables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .grpo import GrpoConfig
from .rewards import RewardConfig
from .sim import SimConfig


class ConfigError(ValueError):
    pass


_SIM_KEYS = tuple(f.name for f in fields(SimConfig) if f.name not in ("grpo", "reward"))


@dataclass
class RunConfig:
    schemas: Optional[str] = None
    examples: Optional[str] = None
    dataset: Optional[str] = None
    predictions: Optional[str] = None
    out: Optional[str] = None
    count: int = 200
    exclude_join_columns: bool = False
    reward: RewardConfig = field(default_factory=RewardConfig)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    sim: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.sim) - set(_SIM_KEYS)
        if unknown:
            raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
        if self.count < 0:
            raise ConfigError("count must be non-negative")
        # Builds (and so validates) the simulator settings eagerly.
        self.sim_config()

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(grpo=self.grpo, reward=self.reward, **self.sim)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid sim settings: {err}") from None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sim"] = dict(self.sim)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "reward" in data:
                data["reward"] = RewardConfig.from_dict(data["reward"])
            if "grpo" in data:
                data["grpo"] = GrpoConfig(**data["grpo"])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
