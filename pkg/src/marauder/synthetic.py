"""Synthetic smart-home logs for demos and tests.

Each room holds a few motion sensors; an activity episode fires sensors of
its room at that activity's preferred hour. Output is a CASAS-format log
with begin/end markers plus a matching layout.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .raster import FloorplanLayout


@dataclass(frozen=True)
class Room:
    name: str
    box: tuple[int, int, int, int]  # x0, y0, x1, y1 on the canvas
    sensors: tuple[str, ...]


def default_rooms() -> list[Room]:
    return [
        Room("Kitchen", (20, 20, 180, 180), ("M001", "M002", "M003", "D001")),
        Room("Bedroom", (220, 220, 380, 380), ("M004", "M005", "M006")),
        Room("Hall", (220, 20, 380, 180), ("M007", "M008", "T001")),
    ]


def make_layout(rooms: list[Room], R: int = 16, canvas: tuple[int, int] = (400, 400),
                seed: int = 0) -> FloorplanLayout:
    rng = np.random.default_rng(seed)
    coords = {}
    for room in rooms:
        x0, y0, x1, y1 = room.box
        for sid in room.sensors:
            coords[sid] = (int(rng.integers(x0, x1)), int(rng.integers(y0, y1)))
    return FloorplanLayout(canvas[0], canvas[1], coords, "Black", R)


def make_log(activities: dict[str, tuple[str, int]], rooms: list[Room], n_episodes: int = 40,
             episode_len: tuple[int, int] = (12, 30), other_room: Optional[str] = "Hall",
             other_len: tuple[int, int] = (0, 6), start: dt.datetime = dt.datetime(2010, 1, 4, 6, 0),
             seed: int = 0) -> str:
    """CASAS log text.

    ``activities`` maps activity name -> (room name, preferred hour). Between
    episodes, up to ``other_len`` unlabelled events fire in ``other_room``.
    """
    rng = np.random.default_rng(seed)
    by_name = {r.name: r for r in rooms}
    names = sorted(activities)
    lines = []
    t = start

    def emit(sid, label=None, marker=None):
        nonlocal t
        t += dt.timedelta(seconds=int(rng.integers(1, 20)))
        if sid.startswith("T"):
            value = f"{rng.uniform(18, 24):.1f}"
        else:
            value = "ON" if rng.random() < 0.6 else "OFF"
        tail = f"\t{label} {marker}" if marker else ""
        lines.append(f"{t:%Y-%m-%d}\t{t:%H:%M:%S}.000000\t{sid}\t{value}{tail}")

    for _ in range(n_episodes):
        act = names[int(rng.integers(len(names)))]
        room_name, hour = activities[act]
        day = t.date() + dt.timedelta(days=1) if t.hour >= hour else t.date()
        t = max(t, dt.datetime.combine(day, dt.time(hour, int(rng.integers(0, 30)))))
        sensors = by_name[room_name].sensors
        n = int(rng.integers(*episode_len))
        for i in range(n):
            sid = sensors[int(rng.integers(len(sensors)))]
            marker = "begin" if i == 0 else ("end" if i == n - 1 else None)
            emit(sid, act, marker)
        if other_room:
            others = by_name[other_room].sensors
            for _ in range(int(rng.integers(*other_len)) if other_len[1] > other_len[0] else other_len[0]):
                emit(others[int(rng.integers(len(others)))])
    return "\n".join(lines) + "\n"


def separable_home(n_episodes: int = 40, R: int = 16, seed: int = 0, episode_len: int = 24):
    """Two activities in two disjoint rooms, no unlabelled gaps.

    Every episode has exactly ``episode_len`` events, so windows whose size
    and stride divide it never straddle two activities.
    """
    rooms = default_rooms()[:2]
    log = make_log({"Cook": ("Kitchen", 8), "Sleep": ("Bedroom", 22)}, rooms, n_episodes,
                   episode_len=(episode_len, episode_len + 1), other_room=None, seed=seed)
    return log, make_layout(rooms, R, seed=seed)


def demo_home(n_episodes: int = 120, R: int = 16, seed: int = 0):
    """Three activities plus an unlabelled hallway, with time-of-day cues."""
    rooms = default_rooms()
    acts = {"Breakfast": ("Kitchen", 7), "Dinner": ("Kitchen", 19), "Sleep": ("Bedroom", 23),
            "Read": ("Bedroom", 14)}
    log = make_log(acts, rooms, n_episodes, seed=seed)
    return log, make_layout(rooms, R, seed=seed)
