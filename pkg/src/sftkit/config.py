"""Run-level configuration: losses, network, strategy, renderer settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossConfig
from .network import NetworkConfig


@dataclass
class StrategyConfig:
    kind: str = "frame"                 # frame | window | adaptive
    warmup_iters: int = 500
    iters_per_frame: int = 200
    window_size: int = 3
    iters_per_window: int = 600
    tolerance: float = 1e-6
    max_iters_per_frame: int = 5000
    cold_restart: bool = False

    def __post_init__(self):
        if self.kind not in ("frame", "window", "adaptive"):
            raise ValueError("strategy kind must be frame/window/adaptive")
        for name in ("warmup_iters", "iters_per_frame", "iters_per_window", "max_iters_per_frame"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        # window_size == 1 degenerates to the frame-wise strategy.
        if self.kind == "window" and self.window_size < 1:
            raise ValueError("window mode needs window_size >= 1")


@dataclass
class RunConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    preset: str = "base"
    deform_mode: str = "network"        # network | vertex-offset
    sil_softness: float = 0.3
    blur_sigma: float = 2.0
    seed: int = 0
    dump_every: int = 0
    out_dir: str | None = None
    eval_points: int = 2048
    chamfer_squared: bool = True

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = cls()
        if "loss" in data:
            cfg.loss = LossConfig(**data["loss"])
        if "strategy" in data:
            cfg.strategy = StrategyConfig(**data["strategy"])
        seed = data.get("seed", cfg.seed)
        if "network" in data:
            cfg.network = NetworkConfig(**data["network"])
            cfg.preset = data.get("preset", "custom")
        else:
            cfg.preset = data.get("preset", cfg.preset)
            cfg.network = NetworkConfig.preset(cfg.preset, seed=seed)
        for name in ("deform_mode", "sil_softness", "blur_sigma", "seed",
                     "dump_every", "out_dir", "eval_points", "chamfer_squared"):
            if name in data:
                setattr(cfg, name, data[name])
        return cfg

    def with_seed(self, seed: int) -> "RunConfig":
        self.seed = seed
        self.network = NetworkConfig(
            hidden_layers=self.network.hidden_layers,
            width=self.network.width,
            input_dim=self.network.input_dim,
            output_dim=self.network.output_dim,
            seed=seed,
        )
        return self
