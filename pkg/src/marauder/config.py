"""Experiment configuration and its canonical text form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import ModelConfig
from .raster import RenderStyle
from .temporal import resolve_components
from .windowing import SplitSpec, WindowConfig


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr >= 0 required")


@dataclass(frozen=True)
class ExperimentConfig:
    window: WindowConfig = WindowConfig(60, 6)
    style: RenderStyle = RenderStyle()
    model: ModelConfig = ModelConfig()
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    classes: tuple = ()
    background: str = "Black"
    days: Optional[int] = None

    def __post_init__(self):
        if self.model.T != self.window.w:
            raise ValueError(f"model T={self.model.T} must equal window size w={self.window.w}")
        if self.classes and self.model.K != len(self.classes):
            raise ValueError(f"model K={self.model.K} but {len(self.classes)} classes")
        resolve_components(self.model.time_components)

    def to_dict(self) -> dict:
        return {
            "window": {"w": self.window.w, "s": self.window.s},
            "style": self.style.to_dict(),
            "model": self.model.to_dict(),
            "split": {"train_frac": self.split.train_frac, "val_frac": self.split.val_frac,
                      "policy": self.split.policy},
            "train": {"epochs": self.train.epochs, "batch_size": self.train.batch_size, "lr": self.train.lr},
            "classes": list(self.classes),
            "background": self.background,
            "days": self.days,
        }

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            window=WindowConfig(**d["window"]),
            style=RenderStyle.from_dict(d["style"]),
            model=ModelConfig.from_dict(d["model"]),
            split=SplitSpec(**d["split"]),
            train=TrainConfig(**d["train"]),
            classes=tuple(d.get("classes", ())),
            background=d.get("background", "Black"),
            days=d.get("days"),
        )

    @classmethod
    def from_canonical(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)
