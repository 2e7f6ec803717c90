"""Run configuration, loaded from a JSON file that mirrors these field names."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents.providers import ProviderConfig
from .bandit import BanditConfig
from .dataset import SplitSpec
from .errors import ConfigError, DatasetError
from .evaluation import LearnerConfig
from .runner import RunnerConfig


@dataclass
class DatasetConfig:
    events: str
    labels: str
    schema: str
    split: SplitSpec = field(default_factory=SplitSpec)

    def to_dict(self) -> dict:
        return {"events": self.events, "labels": self.labels, "schema": self.schema,
                "split": self.split.to_dict()}


@dataclass
class DSLBackendConfig:
    kind: str = "builtin"
    runner: Optional[RunnerConfig] = None
    workers: int = 1
    anchor: str = "global"
    time_budget_seconds: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ConfigError(f"unknown dsl backend {self.kind!r}")
        if self.kind == "external" and self.runner is None:
            raise ConfigError("external dsl backend needs a runner")
        if self.anchor not in ("global", "entity"):
            raise ConfigError("anchor must be 'global' or 'entity'")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "runner": self.runner.to_dict() if self.runner else None,
                "workers": self.workers, "anchor": self.anchor,
                "time_budget_seconds": self.time_budget_seconds}


@dataclass
class MemoryConfig:
    k: int = 3
    dim: int = 256
    max_chars: int = 4000

    def __post_init__(self):
        if self.k < 0 or self.dim < 1 or self.max_chars < 1:
            raise ConfigError("memory config needs k >= 0, dim >= 1, max_chars >= 1")


@dataclass
class AblationConfig:
    """Switches for ablation runs; everything on is the full system."""

    critics: bool = True
    memory: bool = True
    ucb: bool = True


@dataclass
class RunConfig:
    dataset: DatasetConfig
    provider: ProviderConfig
    out_dir: str
    max_iterations: int = 20
    bandit: BanditConfig = field(default_factory=BanditConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    dsl_backend: DSLBackendConfig = field(default_factory=DSLBackendConfig)
    max_critic_iters: int = 3
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    prior_ideas: list = field(default_factory=list)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    exemplars_k: int = 3
    wall_clock_budget_seconds: Optional[float] = None
    prompt_dir: Optional[str] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.max_critic_iters < 1:
            raise ConfigError("max_critic_iters must be >= 1")
        if any(not isinstance(p, str) or not p.strip() for p in self.prior_ideas):
            raise ConfigError("prior_ideas must be nonempty strings")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "RunConfig":
        base = Path(base_dir) if base_dir is not None else Path.cwd()

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() else (base / p).resolve())

        try:
            ds = doc["dataset"]
            try:
                split = SplitSpec.from_dict(ds.get("split", {}))
            except DatasetError as exc:
                raise ConfigError(str(exc)) from None
            dataset = DatasetConfig(resolve(ds["events"]), resolve(ds["labels"]), resolve(ds["schema"]), split)
            prov = dict(doc["provider"])
            if prov.get("scripted_dir"):
                prov["scripted_dir"] = resolve(prov["scripted_dir"])
            dsl = dict(doc.get("dsl_backend", {}))
            if dsl.get("runner"):
                dsl["runner"] = RunnerConfig.from_dict(dsl["runner"])
            return cls(
                dataset=dataset,
                provider=ProviderConfig.from_dict(prov),
                out_dir=resolve(doc["out_dir"]),
                max_iterations=int(doc.get("max_iterations", 20)),
                bandit=BanditConfig.from_dict(doc.get("bandit", {})),
                learner=LearnerConfig.from_dict(doc.get("learner", {})),
                dsl_backend=DSLBackendConfig(**dsl),
                max_critic_iters=int(doc.get("max_critic_iters", 3)),
                memory=MemoryConfig(**doc.get("memory", {})),
                prior_ideas=list(doc.get("prior_ideas", [])),
                ablation=AblationConfig(**doc.get("ablation", {})),
                exemplars_k=int(doc.get("exemplars_k", 3)),
                wall_clock_budget_seconds=doc.get("wall_clock_budget_seconds"),
                prompt_dir=resolve(doc.get("prompt_dir")),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "provider": self.provider.to_dict(),
            "out_dir": self.out_dir,
            "max_iterations": self.max_iterations,
            "bandit": self.bandit.to_dict(),
            "learner": self.learner.to_dict(),
            "dsl_backend": self.dsl_backend.to_dict(),
            "max_critic_iters": self.max_critic_iters,
            "memory": vars(self.memory).copy(),
            "prior_ideas": list(self.prior_ideas),
            "ablation": vars(self.ablation).copy(),
            "exemplars_k": self.exemplars_k,
            "wall_clock_budget_seconds": self.wall_clock_budget_seconds,
            "prompt_dir": self.prompt_dir,
        }
