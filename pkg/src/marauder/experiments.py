"""Ablation grids, the window-size/overlap study, and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import multiprocessing
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .ingest import EVENT_CSV_HEADER, SensorEvent, load_log, read_events_csv
from .raster import FloorplanLayout
from .temporal import COMPONENT_ORDER, TIME_COMBOS
from .windowing import (DURATION_BIN_NAMES, WindowConfig, cross_activity_portion, duration_histogram,
                        slide)

ABLATION_KINDS = ("fading", "background", "spot", "resolution", "time-combos")
STUDY_SIZES = (20, 40, 60, 80)
STUDY_OVERLAPS = (0.5, 0.7, 0.9)
METRIC_KEYS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


class ExperimentError(ValueError):
    pass


# -- inputs and manifests ------------------------------------------------------

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_events(path: str | Path) -> list[SensorEvent]:
    """Read an event CSV, or a raw CASAS log when the CSV header is absent."""
    with open(path, encoding="utf-8", errors="replace") as fh:
        first = fh.readline().strip()
    if first == ",".join(EVENT_CSV_HEADER):
        return read_events_csv(path)
    return load_log(path)


def versions() -> dict:
    import PIL
    import yaml
    return {"marauder": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "pillow": PIL.__version__, "pyyaml": yaml.__version__}


def write_manifest(out_dir: str | Path, command: str, args: dict, inputs: Sequence[str | Path],
                   config: Optional[dict] = None, seed: Optional[int] = None) -> Path:
    """run.json: everything needed to re-execute the run. No timestamps, so
    identical runs produce identical manifests."""
    manifest = {
        "command": command,
        "args": args,
        "config": config,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "versions": versions(),
    }
    path = Path(out_dir) / "run.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- grids ----------------------------------------------------------------------

def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("MARAUDER_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def combo_name(combo: Sequence[str]) -> str:
    return "+".join(combo) if combo else "none"


def ablation_points(kind: str, base: ExperimentConfig, layout: FloorplanLayout) -> list[tuple[str, ExperimentConfig]]:
    """(point name, config) pairs differing from ``base`` only in the ablated factor."""
    if kind == "fading":
        return [(f, base.with_(style=replace(base.style, fading=f))) for f in ("None", "Linear")]
    if kind == "spot":
        return [(s, base.with_(style=replace(base.style, shape=s))) for s in ("Circle", "Square", "Footprint")]
    if kind == "resolution":
        return [(str(r), base.with_(model=replace(base.model, R=r))) for r in (32, 64, 128)]
    if kind == "background":
        if not layout.background_image:
            raise ExperimentError("background ablation needs a floorplan image "
                                  "(set floorplan_image in the layout or pass --floorplan)")
        return [(b, base.with_(background=b)) for b in ("Black", "White", "FloorplanImage")]
    if kind == "time-combos":
        return [(combo_name(c), base.with_(model=replace(base.model, time_components=tuple(c))))
                for c in TIME_COMBOS]
    raise ExperimentError(f"unknown ablation kind {kind!r}; expected one of {ABLATION_KINDS}")


_GRID: dict = {}


def _run_point(i: int) -> dict:
    from .train import run_experiment
    name, cfg = _GRID["points"][i]
    out = _GRID["out"] / name if _GRID["out"] else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    res = run_experiment(_GRID["events"], _GRID["layout"], cfg, out)
    row = {"n_train": res["n_train"], "n_test": res["n_test"], "n_cross": res["n_cross"],
           "majority_baseline": res["majority_baseline"]}
    for split in ("test", "cross"):
        rep = res[split]
        for k in METRIC_KEYS:
            row[f"{split}_{k}"] = getattr(rep, k) if rep else ""
    return row


def run_points(points: Sequence[tuple[str, ExperimentConfig]], events: Sequence[SensorEvent],
               layout: FloorplanLayout, out_dir: Optional[Path] = None) -> list[dict]:
    """Train and score each point; rows come back in point order."""
    _GRID.update(points=list(points), events=events, layout=layout, out=out_dir)
    try:
        workers = worker_count(len(points))
        if workers == 1:
            return [_run_point(i) for i in range(len(points))]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(workers, mp_context=ctx) as pool:
            return list(pool.map(_run_point, range(len(points))))
    finally:
        _GRID.clear()


def ablate(kind: str, base: ExperimentConfig, events: Sequence[SensorEvent], layout: FloorplanLayout,
           out_dir: Optional[Path] = None) -> list[dict]:
    points = ablation_points(kind, base, layout)
    rows = run_points(points, events, layout, out_dir / "runs" if out_dir else None)
    out = []
    for (name, cfg), metrics in zip(points, rows):
        row = {"kind": kind, "value": name}
        if kind == "time-combos":
            comps = set(cfg.model.time_components)
            row.update({c: int(c in comps) for c in COMPONENT_ORDER})
        row.update(metrics)
        out.append(row)
    return out


def window_study(events: Sequence[SensorEvent], base: ExperimentConfig, layout: Optional[FloorplanLayout] = None,
                 sizes: Sequence[int] = STUDY_SIZES, overlaps: Sequence[float] = STUDY_OVERLAPS,
                 train: bool = False, out_dir: Optional[Path] = None) -> list[dict]:
    """One row per (w, overlap) cell: cross-activity portion, duration
    histogram and, with ``train``, test and cross-activity accuracy."""
    cells = []
    for w in sizes:
        for ov in overlaps:
            wc = WindowConfig.from_overlap(w, ov)
            wins = slide(events, wc)
            row = {"w": w, "overlap": ov, "s": wc.s, "n_windows": len(wins),
                   "cross_activity_portion": cross_activity_portion(wins) if wins else ""}
            hist = duration_histogram(wins)
            row.update({f"duration_{n}": c for n, c in zip(DURATION_BIN_NAMES, hist)})
            cells.append((f"w{w}_o{ov}", wc, row))
    if train:
        if layout is None:
            raise ExperimentError("training cells need a layout")
        points = [(name, base.with_(window=wc, model=replace(base.model, T=wc.w))) for name, wc, _ in cells]
        metrics = run_points(points, events, layout, out_dir / "runs" if out_dir else None)
        for (_, _, row), m in zip(cells, metrics):
            row.update(test_accuracy=m["test_accuracy"], cross_accuracy=m["cross_accuracy"])
    return [row for _, _, row in cells]


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    w = csv.DictWriter(buf, fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
