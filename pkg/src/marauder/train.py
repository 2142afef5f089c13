"""Training, evaluation and embedding export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .config import ExperimentConfig
from .ingest import LabelVocabulary, SensorEvent, first_days
from .metrics import MetricsReport, compute_report
from .model import MarauderModel
from .pipeline import Featurizer
from .raster import FloorplanLayout
from .temporal import resolve_components
from .windowing import Window, chronological_split, slide

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class EmptyDataset(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    pass


@dataclass
class TrainResult:
    model: MarauderModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    def log_text(self) -> str:
        return "".join(json.dumps(h, sort_keys=True) + "\n" for h in self.history)


def make_featurizer(cfg: ExperimentConfig, layout: FloorplanLayout, vocab: LabelVocabulary) -> Featurizer:
    lay = layout.with_(R=cfg.model.R, background=cfg.background)
    return Featurizer(lay, cfg.style, resolve_components(cfg.model.time_components), vocab, cfg.model.dtype)


def _batches(n: int, size: int):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


def predict(model: MarauderModel, feat: Featurizer, windows: Sequence[Window], batch_size: int = 32):
    """Argmax predictions and context vectors, in input order."""
    preds, contexts = [], []
    for sl in _batches(len(windows), batch_size):
        b = feat.batch(windows[sl])
        out = model.forward_batch(b.frames, b.frame_index, b.time_feats)
        preds.append(out.logits.data.argmax(axis=1))
        contexts.append(out.context.data)
    if not preds:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.cfg.lstm_hidden), dtype=model.cfg.dtype)
    return np.concatenate(preds), np.concatenate(contexts)


def evaluate(model: MarauderModel, feat: Featurizer, windows: Sequence[Window], batch_size: int = 32) -> MetricsReport:
    preds, _ = predict(model, feat, windows, batch_size)
    y = [feat.vocab.encode(w.label) for w in windows]
    return compute_report(y, preds, feat.vocab.classes)


def train(model: MarauderModel, feat: Featurizer, train_windows: Sequence[Window],
          val_windows: Sequence[Window], cfg: ExperimentConfig,
          checkpoint_path: Optional[str | Path] = None, config_text: Optional[str] = None) -> TrainResult:
    """Mini-batch Adam on cross-entropy; keeps the parameters with the best
    validation macro-F1 (or the last epoch when there is no validation set)."""
    if not train_windows:
        raise EmptyDataset("no training windows")
    tc = cfg.train
    opt = ad.Adam(model.parameters(), lr=tc.lr)
    config_text = config_text or cfg.canonical()
    result = TrainResult(model)
    best_f1 = -math.inf
    best_state = model.state()
    n = len(train_windows)
    for epoch in range(tc.epochs):
        order = np.random.default_rng([cfg.model.seed, epoch]).permutation(n)
        total, seen = 0.0, 0
        for sl in _batches(n, tc.batch_size):
            wins = [train_windows[i] for i in order[sl]]
            b = feat.batch(wins)
            opt.zero_grad()
            out = model.forward_batch(b.frames, b.frame_index, b.time_feats)
            loss = ad.cross_entropy(out.logits, b.targets)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLoss(f"loss {value} at epoch {epoch}, batch starting {b.starts[0]}")
            ad.backward(loss)
            opt.step()
            total += value * len(wins)
            seen += len(wins)
        row = {"epoch": epoch, "train_loss": total / seen}
        if val_windows:
            rep = evaluate(model, feat, val_windows, tc.batch_size)
            row.update(val_accuracy=rep.accuracy, val_macro_f1=rep.macro_f1)
            score = rep.macro_f1
        else:
            score = epoch
        if score > best_f1:
            best_f1 = score
            best_state = model.state()
            result.best_epoch = epoch
            if checkpoint_path is not None:
                checkpoint.save(checkpoint_path, config_text, best_state)
        result.history.append(row)
        log.info("epoch %d %s", epoch, row)
    model.load_state(best_state)
    if checkpoint_path is not None and tc.epochs == 0:
        checkpoint.save(checkpoint_path, config_text, best_state)
    return result


def export_embeddings(model: MarauderModel, feat: Featurizer, windows: Sequence[Window],
                      batch_size: int = 32) -> str:
    """CSV text: window_id, label, c0..c{H-1} (context vectors), ordered by start."""
    windows = sorted(windows, key=lambda w: w.start)
    _, ctx = predict(model, feat, windows, batch_size)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_id", "label"] + [f"c{i}" for i in range(model.cfg.lstm_hidden)])
    for win, vec in zip(windows, ctx):
        w.writerow([win.start, win.label] + [repr(float(v)) for v in vec])
    return buf.getvalue()


def load_model(path: str | Path) -> tuple[ExperimentConfig, MarauderModel]:
    text, params = checkpoint.load(path)
    cfg = ExperimentConfig.from_canonical(text)
    model = MarauderModel(cfg.model)
    missing = set(model.params) ^ set(params)
    if missing:
        raise checkpoint.CheckpointError(f"checkpoint parameters differ from config: {sorted(missing)}")
    model.load_state(params)
    return cfg, model


@dataclass
class Prepared:
    windows: list[Window]
    train: list[Window]
    val: list[Window]
    test: list[Window]
    cross_test: list[Window]
    vocab: LabelVocabulary


def prepare(events: Sequence[SensorEvent], cfg: ExperimentConfig) -> Prepared:
    if cfg.days is not None:
        events = first_days(events, cfg.days)
    windows = slide(events, cfg.window)
    if not windows:
        raise EmptyDataset(f"{len(events)} events yield no windows of size {cfg.window.w}")
    vocab = LabelVocabulary(cfg.classes) if cfg.classes else LabelVocabulary.from_events(events)
    tr, va, te, cx = chronological_split(windows, cfg.split)
    return Prepared(windows, tr, va, te, cx, vocab)


def run_experiment(events: Sequence[SensorEvent], layout: FloorplanLayout, cfg: ExperimentConfig,
                   out_dir: Optional[Path] = None) -> dict:
    """Train on the chronological split and score test + cross-activity test."""
    prep = prepare(events, cfg)
    cfg = cfg.with_(classes=tuple(prep.vocab.classes),
                    model=replace(cfg.model, K=len(prep.vocab)))
    layout.validate_sensors(e.sensor_id for w in prep.windows for e in w.events)
    feat = make_featurizer(cfg, layout, prep.vocab)
    model = MarauderModel(cfg.model)
    ckpt = out_dir / "checkpoint.mara" if out_dir else None
    res = train(model, feat, prep.train, prep.val, cfg, ckpt)
    test = evaluate(model, feat, prep.test, cfg.train.batch_size)
    cross = evaluate(model, feat, prep.cross_test, cfg.train.batch_size) if prep.cross_test else None
    if out_dir:
        (out_dir / "train_log.jsonl").write_text(res.log_text())
        (out_dir / "metrics_test.json").write_text(test.to_json())
        (out_dir / "confusion_test.csv").write_text(test.confusion_csv())
        if cross:
            (out_dir / "metrics_cross.json").write_text(cross.to_json())
            (out_dir / "confusion_cross.csv").write_text(cross.confusion_csv())
    majority = max(np.bincount([prep.vocab.encode(w.label) for w in prep.test])) / len(prep.test)
    return {"config": cfg, "model": model, "history": res.history, "test": test, "cross": cross,
            "majority_baseline": float(majority), "n_train": len(prep.train), "n_test": len(prep.test),
            "n_cross": len(prep.cross_test)}
