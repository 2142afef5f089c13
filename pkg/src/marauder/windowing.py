"""Fixed-size sliding windows over a labeled event stream, plus the window
statistics used for dataset analysis."""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .ingest import OTHER, SensorEvent

# Half-open duration bins in minutes.
DURATION_BINS_MIN = ((0, 1), (1, 5), (5, 10), (10, 30), (30, 60), (60, float("inf")))
DURATION_BIN_NAMES = ("0-1", "1-5", "5-10", "10-30", "30-60", ">60")
MAX_UNIQUE_BUCKET = 5


class WindowingError(ValueError):
    pass


class EmptyInput(WindowingError):
    pass


class DegenerateSplit(WindowingError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    w: int
    s: int

    def __post_init__(self):
        if self.w < 1 or not (1 <= self.s <= self.w):
            raise WindowingError(f"need 1 <= s <= w, got w={self.w}, s={self.s}")

    @classmethod
    def from_overlap(cls, w: int, overlap: float) -> "WindowConfig":
        return cls(w, max(1, round(w * (1 - overlap))))


@dataclass(frozen=True)
class Window:
    start: int
    events: tuple[SensorEvent, ...]
    label: str
    unique_labels: int
    is_cross: bool
    duration_s: float


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    policy: str = "Chronological"

    def __post_init__(self):
        if not 0 < self.train_frac < 1 or not 0 <= self.val_frac < 1:
            raise WindowingError("fractions out of range")
        if self.train_frac + self.val_frac >= 1:
            raise WindowingError("train_frac + val_frac must be < 1")
        if self.policy != "Chronological":
            raise WindowingError(f"unsupported split policy {self.policy!r}")


def make_window(events: Sequence[SensorEvent], start: int, w: int) -> Window:
    evs = tuple(events[start:start + w])
    n_unique = len({e.label for e in evs})
    duration = (evs[-1].timestamp - evs[0].timestamp).total_seconds()
    return Window(start, evs, evs[-1].label, n_unique, n_unique > 1, duration)


def slide(events: Sequence[SensorEvent], cfg: WindowConfig) -> list[Window]:
    n = len(events)
    if n < cfg.w:
        return []
    return [make_window(events, i, cfg.w) for i in range(0, n - cfg.w + 1, cfg.s)]


def window_count(n: int, cfg: WindowConfig) -> int:
    return (n - cfg.w) // cfg.s + 1 if n >= cfg.w else 0


def cross_activity_portion(windows: Sequence[Window]) -> float:
    if not windows:
        raise EmptyInput("no windows")
    return sum(w.is_cross for w in windows) / len(windows)


def unique_label_histogram(windows: Sequence[Window]) -> dict[str, list[int]]:
    """Per window label, counts of windows holding 1, 2, 3, 4, 5+ distinct labels."""
    hist: dict[str, list[int]] = defaultdict(lambda: [0] * MAX_UNIQUE_BUCKET)
    for w in windows:
        hist[w.label][min(w.unique_labels, MAX_UNIQUE_BUCKET) - 1] += 1
    return dict(sorted(hist.items()))


def duration_bin(seconds: float) -> int:
    minutes = seconds / 60.0
    for i, (lo, hi) in enumerate(DURATION_BINS_MIN):
        if lo <= minutes < hi:
            return i
    raise WindowingError(f"negative duration {seconds}")


def duration_histogram(windows: Sequence[Window]) -> list[int]:
    counts = [0] * len(DURATION_BINS_MIN)
    for w in windows:
        counts[duration_bin(w.duration_s)] += 1
    return counts


def chronological_split(windows: Sequence[Window], spec: SplitSpec = SplitSpec()):
    """Split by window start into (train, val, test, cross_test).

    Windows are assigned by start index, so the last w-1 events of a window
    near a cut may belong to the next partition's time range.
    """
    ordered = sorted(windows, key=lambda w: w.start)
    n = len(ordered)
    n_train = int(round(n * spec.train_frac))
    n_val = int(round(n * spec.val_frac))
    train = ordered[:n_train]
    val = ordered[n_train:n_train + n_val]
    test = ordered[n_train + n_val:]
    if not train or not test or (spec.val_frac > 0 and not val):
        raise DegenerateSplit(f"{n} windows give train/val/test = {len(train)}/{len(val)}/{len(test)}")
    cross = [w for w in test if w.is_cross]
    if not cross:
        warnings.warn("test partition has no cross-activity windows", stacklevel=2)
    return train, val, test, cross


def activity_start_histogram(events: Sequence[SensorEvent]) -> dict[str, list[int]]:
    """Hour-of-day counts of activity starts (first event of each same-label run)."""
    hist: dict[str, list[int]] = defaultdict(lambda: [0] * 24)
    prev = None
    for e in events:
        if e.label != prev and e.label != OTHER:
            hist[e.label][e.timestamp.hour] += 1
        prev = e.label
    return dict(sorted(hist.items()))


def window_stats(windows: Sequence[Window], events: Sequence[SensorEvent] = ()) -> dict:
    return {
        "n_windows": len(windows),
        "cross_activity_portion": cross_activity_portion(windows) if windows else None,
        "unique_label_histogram": unique_label_histogram(windows),
        "duration_histogram": dict(zip(DURATION_BIN_NAMES, duration_histogram(windows))),
        "activity_start_histogram": activity_start_histogram(events),
    }
