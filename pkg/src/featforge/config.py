"""Run configuration, loadable from nested JSON."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .database import Strategy
from .models import ModelSpec
from .rl import CollectorConfig

COLLECTORS = ("rl", "random", "restore")
BACKENDS = ("mock", "remote")


class ConfigError(ValueError):
    pass


@dataclass
class DownstreamConfig:
    kind: str = "random_forest"
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class CVConfig:
    k: int = 5
    seed: int = 0


@dataclass
class MockConfig:
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9


@dataclass
class LLMConfig:
    model: str = "Llama-2-13B-chat-hf"
    base_url: str | None = None
    temperature: float = 0.8
    max_tokens: int = 256
    timeout: float = 60.0
    retries: int = 2


@dataclass
class RLConfig:
    episodes: int | None = None     # defaults to K
    steps: int = 12
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    gamma: float = 0.9
    lr: float = 1e-3
    approximator: str = "mlp"
    hidden: int = 32


@dataclass
class RunConfig:
    data: str | None = None
    target: str | None = None
    task: str = "auto"
    operators: list[str] | None = None
    collector: str = "rl"
    restore_path: str | None = None
    strategy: str = "balanced"
    backend: str = "mock"
    K: int = 8
    P: int = 10
    M: int = 4
    max_features: int | None = None
    iterations: int = 200
    cull_every: int = 20
    seed: int = 0
    max_evaluations: int = 5000
    max_prompt_chars: int = 16000
    out_dir: str | None = None
    debug_checks: bool = False
    record_timing: bool = False
    downstream: DownstreamConfig = field(default_factory=DownstreamConfig)
    cv: CVConfig = field(default_factory=CVConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    mock: MockConfig = field(default_factory=MockConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("K", "P", "M", "cull_every", "max_evaluations", "max_prompt_chars"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.K % 2:
            raise ConfigError("K must be even")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError("max_features must be positive")
        if self.collector not in COLLECTORS:
            raise ConfigError(f"collector must be one of {COLLECTORS}")
        if self.collector == "restore" and not self.restore_path:
            raise ConfigError("collector 'restore' needs restore_path")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.cv.k < 2:
            raise ConfigError("cv.k must be >= 2")
        try:
            self.strategy = Strategy.parse(self.strategy).value
            self.model_spec()
            self.collector_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.downstream.kind, dict(self.downstream.params), self.seed)

    def collector_config(self) -> CollectorConfig:
        r = self.rl
        return CollectorConfig(episodes=r.episodes or self.K, steps=r.steps,
                               epsilon_start=r.epsilon_start, epsilon_end=r.epsilon_end,
                               gamma=r.gamma, lr=r.lr, approximator=r.approximator,
                               hidden=r.hidden, seed=self.seed)

    # serialisation ---------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        raw = _expand_dotted(raw)
        nested = {"downstream": DownstreamConfig, "cv": CVConfig, "rl": RLConfig,
                  "mock": MockConfig, "llm": LLMConfig}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in dataclasses.fields(sub)}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def updated(self, overrides: dict[str, Any]) -> "RunConfig":
        """Copy with overrides applied; keys may be dotted ("rl.steps")."""
        merged = _deep_merge(self.to_dict(), _expand_dotted(overrides))
        return RunConfig.from_dict(merged)


def _expand_dotted(raw: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        if isinstance(value, dict) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]] = _deep_merge(node[parts[-1]], value)
        else:
            node[parts[-1]] = value
    return out


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out
