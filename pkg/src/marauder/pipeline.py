"""Turning windows into model batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ingest import LabelVocabulary, decompose_timestamp
from .raster import FloorplanLayout, Renderer, RenderStyle
from .temporal import ComponentSpec, cyclic_encode_many
from .windowing import Window


@dataclass
class Batch:
    frames: np.ndarray               # (U, 3, R, R) distinct frames
    frame_index: np.ndarray          # (B, T) into frames
    time_feats: Optional[np.ndarray]  # (B, T, C, 2)
    targets: np.ndarray              # (B,)
    starts: np.ndarray               # (B,) window start indices


class Featurizer:
    """Renders windows and encodes their timestamps.

    Frames repeat heavily inside and across overlapping windows (a frame
    only changes when a new sensor lights up), so each batch carries only
    its distinct frames plus an index.
    """

    def __init__(self, layout: FloorplanLayout, style: RenderStyle, components: Sequence[ComponentSpec],
                 vocab: LabelVocabulary, dtype=np.float32):
        self.renderer = Renderer(layout, style, dtype)
        self.components = list(components)
        self.vocab = vocab
        self.dtype = np.dtype(dtype)

    def time_features(self, windows: Sequence[Window]) -> Optional[np.ndarray]:
        if not self.components:
            return None
        B, T = len(windows), len(windows[0].events)
        parts = [decompose_timestamp(e.timestamp) for w in windows for e in w.events]
        return cyclic_encode_many(parts, self.components).reshape(B, T, len(self.components), 2)

    def batch(self, windows: Sequence[Window]) -> Batch:
        if not windows:
            raise ValueError("empty batch")
        T = len(windows[0].events)
        slots: dict[tuple, int] = {}
        frames = []
        index = np.empty((len(windows), T), dtype=np.int64)
        for b, win in enumerate(windows):
            if len(win.events) != T:
                raise ValueError("windows in a batch must have equal length")
            for t, (key, active) in enumerate(self.renderer.window_keys(win)):
                slot = slots.get(key)
                if slot is None:
                    slot = slots[key] = len(frames)
                    frames.append(self.renderer.cached_frame(active, key))
                index[b, t] = slot
        targets = np.array([self.vocab.encode(w.label) for w in windows], dtype=np.int64)
        starts = np.array([w.start for w in windows], dtype=np.int64)
        return Batch(np.stack(frames), index, self.time_features(windows), targets, starts)
