"""Independent reference implementations used by the tests.

They share no code with the package beyond plain data types, and favour
obviousness over speed.
"""

import datetime as dt
from fractions import Fraction

import numpy as np

from marauder.ingest import OTHER, SensorEvent, sensor_kind

# Drawn independently from the package constant; '#' marks a covered cell,
# the anchor is row 3, column 2.
FOOTPRINT_ART = [
    ".###.",
    "#####",
    "#####",
    ".###.",
    ".....",
    ".###.",
    ".###.",
]


def in_spot(shape, r, dy, dx):
    if shape == "Circle":
        return dx * dx + dy * dy <= r * r
    if shape == "Square":
        return abs(dx) <= r and abs(dy) <= r
    row, col = dy + 3, dx + 2
    return 0 <= row < 7 and 0 <= col < 5 and FOOTPRINT_ART[row][col] == "#"


def visible_sensors(events, t, fading, alpha_min):
    """sensor_id -> (kind, intensity) by scanning backwards from t."""
    w = len(events)
    out = {}
    for sid in {e.sensor_id for e in events}:
        for j in range(t, -1, -1):
            e = events[j]
            if e.sensor_id == sid and (e.status == 1 or e.kind == "Temperature"):
                inten = 1.0 if fading == "None" else max(alpha_min, 1.0 - (t - j) / w)
                out[sid] = (e.kind, inten)
                break
    return out


def brute_frame(events, t, coords, canvas, R, background, shape, radius, palette,
                fading="None", alpha_min=0.2):
    """Pixel by pixel: the highest sensor id covering a pixel decides its color."""
    vis = visible_sensors(events, t, fading, alpha_min)
    W, H = canvas
    centers = {}
    for sid in vis:
        x, y = coords[sid]
        centers[sid] = (int(Fraction(x * R, W)), int(Fraction(y * R, H)))
    bg = 0.0 if background == "Black" else 1.0
    img = np.empty((3, R, R), dtype=np.float32)
    for py in range(R):
        for px in range(R):
            color = (bg, bg, bg)
            for sid in sorted(vis):
                cx, cy = centers[sid]
                if in_spot(shape, radius, py - cy, px - cx):
                    kind, inten = vis[sid]
                    color = tuple(c / 255.0 * inten for c in palette[kind])
            for ch in range(3):
                img[ch, py, px] = np.float32(color[ch])
    return img


def random_events(rng, n, sensors, labels=("A", "B", OTHER), t0=dt.datetime(2010, 1, 4)):
    out, t, cur = [], t0, OTHER
    for _ in range(n):
        if rng.random() < 0.1:
            cur = str(rng.choice(labels))
        sid = str(rng.choice(sensors))
        kind = sensor_kind(sid)
        value = float(rng.normal(20, 2)) if kind == "Temperature" else None
        status = 1 if kind == "Temperature" else int(rng.integers(0, 2))
        out.append(SensorEvent(sid, kind, status, value, t, cur))
        t += dt.timedelta(seconds=int(rng.integers(0, 900)))
    return out


def brute_windows(events, w, s):
    """Windows as (start, label, n_unique, duration_s) by explicit enumeration."""
    out = []
    start = 0
    while start + w <= len(events):
        chunk = events[start:start + w]
        labels = []
        for e in chunk:
            if e.label not in labels:
                labels.append(e.label)
        out.append((start, chunk[-1].label, len(labels),
                    (chunk[-1].timestamp - chunk[0].timestamp).total_seconds()))
        start += s
    return out


DURATION_EDGES_S = [0, 60, 300, 600, 1800, 3600]


def brute_duration_hist(durations):
    counts = [0] * 6
    for d in durations:
        b = 0
        for i, edge in enumerate(DURATION_EDGES_S):
            if d >= edge:
                b = i
        counts[b] += 1
    return counts


def brute_unique_hist(rows):
    hist = {}
    for _, label, n_unique, _ in rows:
        hist.setdefault(label, [0, 0, 0, 0, 0])
        hist[label][min(n_unique, 5) - 1] += 1
    return hist
