"""Command-line entry point.

Exit codes: 0 success, 1 data error (bad or missing input), 2 usage error.
Every subcommand writes a run.json manifest next to its artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image

from . import __version__
from .checkpoint import CheckpointError
from .config import ExperimentConfig, TrainConfig
from .experiments import (ABLATION_KINDS, STUDY_OVERLAPS, STUDY_SIZES, ExperimentError, ablate,
                          load_events, rows_to_csv, window_study, write_manifest)
from .ingest import IngestError, load_log, write_events_csv
from .model import ModelConfig
from .raster import (RasterError, RenderStyle, contact_sheet, dump_layout, load_layout, render_window,
                     to_uint8_image)
from .temporal import DEFAULT_COMPONENTS, TemporalError
from .train import (TrainingError, evaluate, export_embeddings, load_model, make_featurizer, prepare,
                    run_experiment)
from .windowing import SplitSpec, WindowConfig, WindowingError, make_window, slide, window_stats

log = logging.getLogger("marauder")

DATA_ERRORS = (OSError, IngestError, RasterError, WindowingError, TrainingError, CheckpointError,
               ExperimentError)


class DataError(Exception):
    pass


class UsageError(Exception):
    pass


def need_file(path: Optional[str], what: str) -> Path:
    if path is None:
        raise DataError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path}: {what} not found")
    return p


def _events(path: str):
    p = need_file(path, "events file")
    try:
        return load_events(p)
    except (IngestError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _layout(path: str, floorplan: Optional[str] = None):
    p = need_file(path, "layout file")
    try:
        layout = load_layout(p)
    except (RasterError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid layout: {exc}") from None
    if floorplan:
        layout = layout.with_(background_image=str(need_file(floorplan, "floorplan image")))
    return layout


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- argument groups --------------------------------------------------------------

def add_config_args(p: argparse.ArgumentParser, window: bool = True) -> None:
    g = p.add_argument_group("experiment")
    if window:
        g.add_argument("--w", type=int, default=60, help="window size in events")
        g.add_argument("--s", type=int, default=6, help="window stride in events")
    g.add_argument("--epochs", type=int, default=10)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--days", type=int, default=None, help="keep only the first N days of events")
    g.add_argument("--time-components", default=",".join(DEFAULT_COMPONENTS),
                   help="comma list from month,day,weekday,hour,minute; empty for none")
    g.add_argument("--time-dim", type=int, default=30)
    g.add_argument("--resolution", type=int, default=64)
    g.add_argument("--fading", choices=("None", "Linear"), default="None")
    g.add_argument("--shape", choices=("Circle", "Square", "Footprint"), default="Circle")
    g.add_argument("--radius", type=int, default=2)
    g.add_argument("--background", choices=("Black", "White", "FloorplanImage"), default=None,
                   help="defaults to the layout's background")
    g.add_argument("--floorplan", default=None, help="floorplan image for the FloorplanImage background")
    g.add_argument("--precision", choices=("F32", "F64"), default="F32")
    g.add_argument("--frame-dim", type=int, default=64)
    g.add_argument("--lstm-hidden", type=int, default=128)
    g.add_argument("--attn-hidden", type=int, default=64)
    g.add_argument("--mlp-hidden", type=int, default=64)
    g.add_argument("--cnn-channels", default="16,32,64")
    g.add_argument("--train-frac", type=float, default=0.8)
    g.add_argument("--val-frac", type=float, default=0.1)


def build_config(args, layout=None) -> ExperimentConfig:
    """ExperimentConfig from flags; invalid combinations are usage errors."""
    try:
        return _build_config(args, layout)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _build_config(args, layout=None) -> ExperimentConfig:
    w = getattr(args, "w", 60)
    s = getattr(args, "s", 6)
    comps = tuple(c.strip().lower() for c in args.time_components.split(",") if c.strip())
    try:
        channels = tuple(int(c) for c in args.cnn_channels.split(","))
    except ValueError:
        raise ValueError(f"--cnn-channels expects three integers, got {args.cnn_channels!r}") from None
    background = args.background or (layout.background if layout is not None else "Black")
    return ExperimentConfig(
        window=WindowConfig(w, s),
        style=RenderStyle(shape=args.shape, radius_px=args.radius, fading=args.fading),
        model=ModelConfig(R=args.resolution, T=w, K=2, frame_dim=args.frame_dim, time_dim=args.time_dim,
                          lstm_hidden=args.lstm_hidden, attn_hidden=args.attn_hidden,
                          mlp_hidden=args.mlp_hidden, cnn_channels=channels, time_components=comps,
                          seed=args.seed, precision=args.precision),
        split=SplitSpec(args.train_frac, args.val_frac),
        train=TrainConfig(args.epochs, args.batch_size, args.lr),
        background=background,
        days=args.days,
    )


def _inputs(*paths) -> list[str]:
    return [p for p in paths if p]


# -- subcommands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    src = need_file(args.log, "log file")
    events = load_log(src, strict=args.strict)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_events_csv(events, out)
    write_manifest(out.parent, "ingest", vars(args), _inputs(args.log))
    print(f"{len(events)} events -> {out}")
    return 0


def cmd_windows(args) -> int:
    try:
        wc = WindowConfig(args.w, args.s)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    events = _events(args.events)
    wins = slide(events, wc)
    out = _out_dir(args.out)
    stats = window_stats(wins, events)
    stats.update(w=wc.w, s=wc.s, n_events=len(events))
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    lines = ["start,label,unique,is_cross,duration_s"]
    lines += [f"{w.start},{w.label},{w.unique_labels},{int(w.is_cross)},{w.duration_s:g}" for w in wins]
    (out / "windows.csv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "windows analyze", vars(args), _inputs(args.events))
    portion = stats["cross_activity_portion"]
    print(f"{len(wins)} windows, cross-activity portion {portion if portion is None else round(portion, 4)}")
    return 0


def cmd_render(args) -> int:
    events = _events(args.events)
    layout = _layout(args.layout, args.floorplan)
    layout = layout.with_(R=args.resolution, background=args.background or layout.background)
    n = len(events)
    start = args.window_index * args.s
    if args.window_index < 0 or start + args.w > n:
        raise DataError(f"{args.events}: window {args.window_index} (w={args.w}, s={args.s}) "
                        f"is outside {n} events")
    win = make_window(events, start, args.w)
    layout.validate_sensors(e.sensor_id for e in win.events)
    style = RenderStyle(shape=args.shape, radius_px=args.radius, fading=args.fading)
    frames = render_window(win, layout, style)
    out = _out_dir(args.out)
    for t, f in enumerate(frames):
        Image.fromarray(to_uint8_image(f)).save(out / f"frame_{t:03d}.png")
    Image.fromarray(contact_sheet(frames)).save(out / "contact_sheet.png")
    write_manifest(out, "render preview", vars(args), _inputs(args.events, args.layout, args.floorplan))
    print(f"window {args.window_index} ({win.label}): {len(frames)} frames -> {out}")
    return 0


def cmd_train(args) -> int:
    events = _events(args.events)
    layout = _layout(args.layout, args.floorplan)
    cfg = build_config(args, layout)
    out = _out_dir(args.out)
    res = run_experiment(events, layout, cfg, out)
    write_manifest(out, "train", vars(args), _inputs(args.events, args.layout, args.floorplan),
                   res["config"].to_dict(), cfg.model.seed)
    test = res["test"]
    print(f"test accuracy {test.accuracy:.4f} macro-F1 {test.macro_f1:.4f} "
          f"(majority baseline {res['majority_baseline']:.4f})")
    if res["cross"]:
        print(f"cross-activity accuracy {res['cross'].accuracy:.4f} macro-F1 {res['cross'].macro_f1:.4f}")
    return 0


def cmd_eval(args) -> int:
    ckpt = need_file(args.checkpoint, "checkpoint")
    try:
        cfg, model = load_model(ckpt)
    except (CheckpointError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.checkpoint}: {exc}") from None
    events = _events(args.events)
    layout = _layout(args.layout, args.floorplan)
    prep = prepare(events, cfg)
    unknown = {w.label for w in prep.windows} - set(prep.vocab.classes)
    if unknown:
        raise DataError(f"{args.events}: labels not known to the checkpoint: {sorted(unknown)}")
    layout.validate_sensors(e.sensor_id for w in prep.windows for e in w.events)
    feat = make_featurizer(cfg, layout, prep.vocab)
    subsets = {"test": prep.test, "cross": prep.cross_test, "all": prep.windows}
    out = _out_dir(args.out)
    for name in args.subset:
        wins = subsets[name]
        if not wins:
            print(f"{name}: no windows")
            continue
        rep = evaluate(model, feat, wins, cfg.train.batch_size)
        (out / f"metrics_{name}.json").write_text(rep.to_json())
        (out / f"confusion_{name}.csv").write_text(rep.confusion_csv())
        print(f"{name}: accuracy {rep.accuracy:.4f} macro-F1 {rep.macro_f1:.4f} over {rep.total} windows")
    if args.embeddings:
        (out / "embeddings.csv").write_text(export_embeddings(model, feat, subsets[args.subset[0]],
                                                              cfg.train.batch_size))
    write_manifest(out, "eval", vars(args), _inputs(args.checkpoint, args.events, args.layout, args.floorplan),
                   cfg.to_dict(), cfg.model.seed)
    return 0


def cmd_ablate(args) -> int:
    events = _events(args.events)
    layout = _layout(args.layout, args.floorplan)
    cfg = build_config(args, layout)
    out = _out_dir(args.out)
    rows = ablate(args.kind, cfg, events, layout, out)
    (out / "results.csv").write_text(rows_to_csv(rows))
    write_manifest(out, f"ablate {args.kind}", vars(args), _inputs(args.events, args.layout, args.floorplan),
                   cfg.to_dict(), cfg.model.seed)
    print(f"{len(rows)} runs -> {out / 'results.csv'}")
    return 0


def cmd_window_study(args) -> int:
    events = _events(args.events)
    layout = _layout(args.layout, args.floorplan) if args.train else None
    cfg = build_config(args, layout)
    out = _out_dir(args.out)
    rows = window_study(events, cfg, layout, args.sizes, args.overlaps, args.train, out)
    (out / "window_study.csv").write_text(rows_to_csv(rows))
    write_manifest(out, "window-study", vars(args), _inputs(args.events, args.layout, args.floorplan),
                   cfg.to_dict(), cfg.model.seed)
    print(f"{len(rows)} cells -> {out / 'window_study.csv'}")
    return 0


def cmd_demo(args) -> int:
    from .synthetic import demo_home
    out = _out_dir(args.out)
    text, layout = demo_home(n_episodes=args.episodes, R=64, seed=args.seed)
    (out / "home.txt").write_text(text)
    dump_layout(layout, out / "home.yaml")
    write_manifest(out, "demo", vars(args), [])
    print(f"wrote {out / 'home.txt'} and {out / 'home.yaml'}")
    return 0


# -- parser ----------------------------------------------------------------------------

def _csv_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


def _csv_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="marauder", description="Trajectory-image activity recognition.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a CASAS log into an event CSV")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="events CSV path")
    p.add_argument("--strict", action="store_true", help="fail on the first bad line")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("windows", help="window statistics")
    wsub = p.add_subparsers(dest="action", required=True)
    p = wsub.add_parser("analyze")
    p.add_argument("--events", required=True)
    p.add_argument("--w", type=int, default=60)
    p.add_argument("--s", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("render", help="render trajectory frames")
    rsub = p.add_subparsers(dest="action", required=True)
    p = rsub.add_parser("preview")
    p.add_argument("--events", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--window-index", type=int, default=0)
    p.add_argument("--w", type=int, default=60)
    p.add_argument("--s", type=int, default=6)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--shape", choices=("Circle", "Square", "Footprint"), default="Circle")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--fading", choices=("None", "Linear"), default="None")
    p.add_argument("--background", choices=("Black", "White", "FloorplanImage"), default=None)
    p.add_argument("--floorplan", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="train and score on a chronological split")
    p.add_argument("--events", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--floorplan", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--subset", nargs="+", choices=("test", "cross", "all"), default=["test", "cross"])
    p.add_argument("--embeddings", action="store_true", help="also write context vectors of the first subset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="one-factor ablation grid")
    p.add_argument("--kind", required=True, choices=ABLATION_KINDS)
    p.add_argument("--events", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("window-study", help="window size x overlap grid")
    p.add_argument("--events", required=True)
    p.add_argument("--layout", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", type=_csv_ints, default=list(STUDY_SIZES))
    p.add_argument("--overlaps", type=_csv_floats, default=list(STUDY_OVERLAPS))
    p.add_argument("--train", action="store_true", help="also train and score every cell")
    add_config_args(p, window=False)
    p.set_defaults(func=cmd_window_study)

    p = sub.add_parser("demo", help="write a small synthetic home (log + layout)")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    func = args.func
    del args.func
    try:
        return func(args)
    except (UsageError, TemporalError) as exc:
        parser.print_usage(sys.stderr)
        print(f"marauder: error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
