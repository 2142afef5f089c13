"""Cyclic calendar features and their learnable projection into a time embedding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ingest import TimeParts


class TemporalError(ValueError):
    pass


class DimensionTooSmall(TemporalError):
    pass


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    period: int
    offset: int
    attr: str


COMPONENTS = {
    "month": ComponentSpec("Month", 12, 1, "month"),
    "day": ComponentSpec("Day", 31, 1, "day"),
    "weekday": ComponentSpec("Weekday", 7, 0, "weekday"),
    "hour": ComponentSpec("Hour", 24, 0, "hour"),
    "minute": ComponentSpec("Minute", 60, 0, "minute"),
}
COMPONENT_ORDER = ("month", "day", "weekday", "hour", "minute")
DEFAULT_COMPONENTS = ("weekday", "hour", "minute")
DEFAULT_TIME_DIM = 30

# Table rows for the time-combination ablation, in canonical component order.
TIME_COMBOS = (
    (),
    ("month",), ("day",), ("weekday",), ("hour",), ("minute",),
    ("month", "day"), ("weekday", "hour"), ("weekday", "minute"), ("hour", "minute"),
    ("weekday", "hour", "minute"),
    ("month", "weekday", "hour", "minute"),
    ("month", "day", "weekday", "hour", "minute"),
)


def resolve_components(names: Sequence[str]) -> list[ComponentSpec]:
    """Look up component names (case-insensitive), keeping canonical order."""
    wanted = {n.strip().lower() for n in names if n.strip()}
    unknown = wanted - set(COMPONENTS)
    if unknown:
        raise TemporalError(f"unknown time components: {sorted(unknown)}")
    return [COMPONENTS[n] for n in COMPONENT_ORDER if n in wanted]


def angle(value: int, spec: ComponentSpec) -> float:
    # Modular reduction makes x and x + period map to the same angle exactly.
    return 2.0 * math.pi * ((value - spec.offset) % spec.period) / spec.period


def cyclic_encode(parts: TimeParts, specs: Sequence[ComponentSpec]) -> np.ndarray:
    """[sin, cos] per component, flattened in spec order; shape (2 * len(specs),)."""
    out = np.empty(2 * len(specs))
    for i, spec in enumerate(specs):
        th = angle(getattr(parts, spec.attr), spec)
        out[2 * i] = math.sin(th)
        out[2 * i + 1] = math.cos(th)
    return out


def cyclic_encode_many(parts: Sequence[TimeParts], specs: Sequence[ComponentSpec]) -> np.ndarray:
    """Stacked cyclic features, shape (len(parts), len(specs), 2)."""
    out = np.empty((len(parts), len(specs), 2))
    for j, spec in enumerate(specs):
        vals = np.array([getattr(p, spec.attr) for p in parts], dtype=np.int64)
        th = 2.0 * np.pi * ((vals - spec.offset) % spec.period) / spec.period
        out[:, j, 0] = np.sin(th)
        out[:, j, 1] = np.cos(th)
    return out


def allocate_dims(d: int, n_components: int) -> list[int]:
    if n_components == 0:
        return []
    if d < 2 * n_components:
        raise DimensionTooSmall(f"time dim {d} too small for {n_components} components")
    base = d // n_components
    return [base] * (n_components - 1) + [d - base * (n_components - 1)]


@dataclass
class TimeProjectionParams:
    weights: list[Tensor]  # each (d_x, 2)
    biases: list[Tensor]   # each (d_x,)

    @property
    def dim(self) -> int:
        return sum(b.shape[0] for b in self.biases)

    @classmethod
    def init(cls, d: int, n_components: int, rng: np.random.Generator, dtype=np.float32):
        bound = math.sqrt(1.0 / 2.0)
        ws, bs = [], []
        for dx in allocate_dims(d, n_components):
            ws.append(Tensor(rng.uniform(-bound, bound, (dx, 2)).astype(dtype), requires_grad=True))
            bs.append(Tensor(rng.uniform(-bound, bound, (dx,)).astype(dtype), requires_grad=True))
        return cls(ws, bs)


def project(features, params: TimeProjectionParams) -> Tensor:
    """Concatenate W_x @ feat_x + b_x over components.

    ``features`` has shape (..., C, 2) (or flat (2C,) for a single
    timestamp); the result has shape (..., d).
    """
    feats = features if isinstance(features, Tensor) else Tensor(np.asarray(features))
    if feats.ndim == 1:
        feats = ad.reshape(feats, (-1, 2))
    C = len(params.weights)
    if feats.shape[-2:] != (C, 2):
        raise ad.ShapeMismatch(f"features {feats.shape} do not match {C} components")
    lead = feats.shape[:-2]
    flat = ad.reshape(feats, (-1, C, 2))
    embs = []
    for x, (W, b) in enumerate(zip(params.weights, params.biases)):
        embs.append(ad.linear(flat[:, x, :], W, b))
    out = ad.concat(embs, axis=-1)
    return ad.reshape(out, lead + (params.dim,))
