"""Floorplan trajectory images.

Each window becomes ``w`` RGB frames of shape (3, R, R). Frame ``t`` shows
every sensor that fired at some index <= t in the window, drawn at its
floorplan position in a color keyed by sensor kind.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

from .ingest import SensorEvent
from .windowing import Window

DEFAULT_PALETTE = {
    "Motion": (0, 255, 0),
    "Door": (255, 0, 0),
    "Temperature": (0, 128, 255),
    "Item": (255, 255, 0),
    "Other": (255, 0, 255),
}

SHAPES = ("Circle", "Square", "Footprint")
BACKGROUNDS = ("Black", "White", "FloorplanImage")

# 7 rows x 5 cols, anchored at row 3, col 2.
FOOTPRINT_STENCIL = np.array([
    [0, 1, 1, 1, 0],
    [1, 1, 1, 1, 1],
    [1, 1, 1, 1, 1],
    [0, 1, 1, 1, 0],
    [0, 0, 0, 0, 0],
    [0, 1, 1, 1, 0],
    [0, 1, 1, 1, 0],
], dtype=bool)
FOOTPRINT_ANCHOR = (3, 2)


class RasterError(ValueError):
    pass


class OutOfCanvas(RasterError):
    pass


class MissingCoordinates(RasterError):
    def __init__(self, sensor: str):
        self.sensor = sensor
        super().__init__(f"no floorplan coordinates for sensor {sensor}")


@dataclass
class FloorplanLayout:
    canvas_w: int
    canvas_h: int
    coords: dict[str, tuple[int, int]]
    background: str = "Black"
    R: int = 64
    background_image: Optional[str] = None
    _bg_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.canvas_w <= 0 or self.canvas_h <= 0 or self.R <= 0:
            raise RasterError("canvas and resolution must be positive")
        if self.background not in BACKGROUNDS:
            raise RasterError(f"unknown background {self.background!r}")
        if self.background == "FloorplanImage" and not self.background_image:
            raise RasterError("FloorplanImage background needs an image path")
        for sid, (x, y) in self.coords.items():
            if not (0 <= x < self.canvas_w and 0 <= y < self.canvas_h):
                raise OutOfCanvas(f"sensor {sid} at ({x}, {y}) outside {self.canvas_w}x{self.canvas_h}")

    def with_(self, **changes) -> "FloorplanLayout":
        d = dict(canvas_w=self.canvas_w, canvas_h=self.canvas_h, coords=self.coords,
                 background=self.background, R=self.R, background_image=self.background_image)
        d.update(changes)
        return FloorplanLayout(**d)

    def validate_sensors(self, sensor_ids: Iterable[str]) -> None:
        for sid in sorted(set(sensor_ids)):
            if sid not in self.coords:
                raise MissingCoordinates(sid)

    def background_array(self) -> np.ndarray:
        """(3, R, R) float64 background in [0, 1]."""
        key = (self.background, self.R, self.background_image)
        bg = self._bg_cache.get(key)
        if bg is None:
            if self.background == "Black":
                bg = np.zeros((3, self.R, self.R))
            elif self.background == "White":
                bg = np.ones((3, self.R, self.R))
            else:
                bg = _load_floorplan(self.background_image, self.R)
            bg.setflags(write=False)
            self._bg_cache[key] = bg
        return bg


def _load_floorplan(path: str, R: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        img = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    h, w = img.shape[:2]
    # Nearest neighbour: output pixel i samples source floor(i * size / R).
    rows = (np.arange(R) * h) // R
    cols = (np.arange(R) * w) // R
    return img[rows][:, cols].transpose(2, 0, 1).copy()


def load_layout(path: str | Path) -> FloorplanLayout:
    """Read a YAML layout file.

    Expected keys: ``canvas: [w, h]``, ``resolution``, ``background``
    (``black``, ``white`` or ``{image: path}``) and ``sensors: {id: [x, y]}``.
    """
    path = Path(path)
    doc = yaml.safe_load(path.read_text())
    if not isinstance(doc, dict) or "canvas" not in doc or "sensors" not in doc:
        raise RasterError(f"{path}: layout needs 'canvas' and 'sensors'")
    bg = doc.get("background", "black")
    image = None
    if isinstance(bg, dict):
        image = str((path.parent / bg["image"]).resolve())
        bg = "FloorplanImage"
    elif str(bg).lower() in ("floorplan", "floorplanimage"):
        bg = "FloorplanImage"
    else:
        bg = str(bg).capitalize()
    if doc.get("floorplan_image"):
        image = str((path.parent / doc["floorplan_image"]).resolve())
    cw, ch = doc["canvas"]
    coords = {str(k): (int(v[0]), int(v[1])) for k, v in doc["sensors"].items()}
    return FloorplanLayout(int(cw), int(ch), coords, bg, int(doc.get("resolution", 64)), image)


def dump_layout(layout: FloorplanLayout, path: str | Path) -> None:
    bg = {"image": layout.background_image} if layout.background == "FloorplanImage" else layout.background.lower()
    doc = {
        "canvas": [layout.canvas_w, layout.canvas_h],
        "resolution": layout.R,
        "background": bg,
        "sensors": {k: list(v) for k, v in sorted(layout.coords.items())},
    }
    if layout.background_image and layout.background != "FloorplanImage":
        doc["floorplan_image"] = layout.background_image
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


@dataclass(frozen=True)
class RenderStyle:
    shape: str = "Circle"
    radius_px: int = 2
    palette: tuple = tuple(sorted(DEFAULT_PALETTE.items()))
    fading: str = "None"  # "None" | "Linear"
    alpha_min: float = 0.2

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise RasterError(f"unknown shape {self.shape!r}")
        if self.radius_px < 1:
            raise RasterError("radius_px must be positive")
        if self.fading not in ("None", "Linear"):
            raise RasterError(f"unknown fading {self.fading!r}")
        if not 0 < self.alpha_min <= 1:
            raise RasterError("alpha_min must lie in (0, 1]")
        colors = [tuple(c) for _, c in self.palette]
        if len(set(colors)) != len(colors):
            raise RasterError("palette colors must be distinct per kind")

    def color(self, kind: str) -> tuple[int, int, int]:
        return dict(self.palette)[kind]

    def to_dict(self) -> dict:
        return {"shape": self.shape, "radius_px": self.radius_px,
                "palette": {k: list(v) for k, v in self.palette},
                "fading": self.fading, "alpha_min": self.alpha_min}

    @classmethod
    def from_dict(cls, d: dict) -> "RenderStyle":
        pal = tuple(sorted((k, tuple(v)) for k, v in d.get("palette", DEFAULT_PALETTE).items()))
        return cls(d.get("shape", "Circle"), int(d.get("radius_px", 2)), pal,
                   d.get("fading", "None"), float(d.get("alpha_min", 0.2)))


def scale_coord(p: tuple[int, int], layout: FloorplanLayout) -> tuple[int, int]:
    x, y = p
    if not (0 <= x < layout.canvas_w and 0 <= y < layout.canvas_h):
        raise OutOfCanvas(f"({x}, {y}) outside {layout.canvas_w}x{layout.canvas_h}")
    R = layout.R
    return (min(max(x * R // layout.canvas_w, 0), R - 1),
            min(max(y * R // layout.canvas_h, 0), R - 1))


def shape_offsets(shape: str, radius: int) -> list[tuple[int, int]]:
    """(dy, dx) offsets covered by a spot centred at the origin."""
    if shape == "Footprint":
        ay, ax = FOOTPRINT_ANCHOR
        ys, xs = np.nonzero(FOOTPRINT_STENCIL)
        return [(int(y - ay), int(x - ax)) for y, x in zip(ys, xs)]
    out = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if shape == "Square" or dx * dx + dy * dy <= radius * radius:
                out.append((dy, dx))
    return out


def _qualifies(ev: SensorEvent) -> bool:
    return ev.status == 1 or ev.kind == "Temperature"


def fade(t: int, j: int, w: int, style: RenderStyle) -> float:
    if style.fading == "None":
        return 1.0
    return max(style.alpha_min, 1.0 - (t - j) / w)


def active_set(window: Window, t: int, style: RenderStyle) -> dict[str, tuple[str, float]]:
    """Sensors visible at frame ``t``: sensor_id -> (kind, intensity)."""
    w = len(window.events)
    if not 0 <= t < w:
        raise IndexError(f"frame {t} outside window of {w}")
    last: dict[str, tuple[str, int]] = {}
    for j in range(t + 1):
        ev = window.events[j]
        if _qualifies(ev):
            last[ev.sensor_id] = (ev.kind, j)
    return {sid: (kind, fade(t, j, w, style)) for sid, (kind, j) in last.items()}


def _active_sets(window: Window, style: RenderStyle) -> list[dict[str, tuple[str, float]]]:
    """active_set for every t in one pass."""
    w = len(window.events)
    last: dict[str, tuple[str, int]] = {}
    out = []
    for t, ev in enumerate(window.events):
        if _qualifies(ev):
            last[ev.sensor_id] = (ev.kind, t)
        out.append({sid: (kind, fade(t, j, w, style)) for sid, (kind, j) in last.items()})
    return out


def active_key(active: dict[str, tuple[str, float]]) -> tuple:
    return tuple(sorted((sid, kind, inten) for sid, (kind, inten) in active.items()))


class Renderer:
    """Draws active sets for one (layout, style) pair.

    Spot pixels are written opaquely as ``palette[kind] / 255 * intensity``,
    so spot colors do not depend on the background. Sensors are drawn in
    ascending id order; later sensors overwrite earlier ones.
    """

    def __init__(self, layout: FloorplanLayout, style: RenderStyle, dtype=np.float32,
                 cache_size: int = 2048):
        self.layout = layout
        self.style = style
        self.dtype = np.dtype(dtype)
        self._offsets = np.array(shape_offsets(style.shape, style.radius_px), dtype=np.int64)
        self._pixels: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._colors = {k: np.array(c, dtype=np.float64) / 255.0 for k, c in style.palette}
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def _spot(self, sid: str):
        px = self._pixels.get(sid)
        if px is None:
            if sid not in self.layout.coords:
                raise MissingCoordinates(sid)
            cx, cy = scale_coord(self.layout.coords[sid], self.layout)
            ys = cy + self._offsets[:, 0]
            xs = cx + self._offsets[:, 1]
            R = self.layout.R
            keep = (ys >= 0) & (ys < R) & (xs >= 0) & (xs < R)
            px = (ys[keep], xs[keep])
            self._pixels[sid] = px
        return px

    def frame(self, active: dict[str, tuple[str, float]]) -> np.ndarray:
        img = self.layout.background_array().copy()
        for sid in sorted(active):
            kind, inten = active[sid]
            ys, xs = self._spot(sid)
            img[:, ys, xs] = (self._colors[kind] * inten)[:, None]
        return img.astype(self.dtype)

    def cached_frame(self, active: dict[str, tuple[str, float]], key: tuple | None = None) -> np.ndarray:
        key = active_key(active) if key is None else key
        img = self._cache.get(key)
        if img is None:
            img = self.frame(active)
            img.setflags(write=False)
            self._cache[key] = img
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return img

    def window(self, window: Window) -> np.ndarray:
        return np.stack([self.cached_frame(a) for a in _active_sets(window, self.style)])

    def window_keys(self, window: Window) -> list[tuple[tuple, dict]]:
        return [(active_key(a), a) for a in _active_sets(window, self.style)]


def render_frame(active: dict[str, tuple[str, float]], layout: FloorplanLayout,
                 style: RenderStyle, dtype=np.float32) -> np.ndarray:
    return Renderer(layout, style, dtype).frame(active)


def render_window(window: Window, layout: FloorplanLayout, style: RenderStyle,
                  dtype=np.float32) -> np.ndarray:
    """FrameSequence for one window as an array of shape (w, 3, R, R)."""
    return Renderer(layout, style, dtype).window(window)


def render_heatmap(events: Sequence[SensorEvent], layout: FloorplanLayout,
                   style: RenderStyle = RenderStyle(), dtype=np.float32) -> np.ndarray:
    """One spot per triggered sensor, intensity = trigger count / max count."""
    counts: dict[str, tuple[str, int]] = {}
    for ev in events:
        if _qualifies(ev):
            kind, n = counts.get(ev.sensor_id, (ev.kind, 0))
            counts[ev.sensor_id] = (kind, n + 1)
    if not counts:
        return layout.background_array().astype(dtype)
    top = max(n for _, n in counts.values())
    active = {sid: (kind, n / top) for sid, (kind, n) in counts.items()}
    return Renderer(layout, style, dtype).frame(active)


def to_uint8_image(frame: np.ndarray) -> np.ndarray:
    """(3, R, R) in [0, 1] -> (R, R, 3) uint8."""
    return np.round(np.clip(frame, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)


def contact_sheet(frames: np.ndarray, pad: int = 1) -> np.ndarray:
    """Tile (T, 3, R, R) frames into one uint8 RGB image."""
    T, _, R, _ = frames.shape
    cols = int(np.ceil(np.sqrt(T)))
    rows = int(np.ceil(T / cols))
    sheet = np.full((rows * (R + pad) + pad, cols * (R + pad) + pad, 3), 128, dtype=np.uint8)
    for i in range(T):
        r, c = divmod(i, cols)
        y, x = pad + r * (R + pad), pad + c * (R + pad)
        sheet[y:y + R, x:x + R] = to_uint8_image(frames[i])
    return sheet
