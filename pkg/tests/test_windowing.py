import datetime as dt
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marauder.ingest import OTHER, SensorEvent
from marauder.windowing import (
    DegenerateSplit, EmptyInput, SplitSpec, WindowConfig, WindowingError, activity_start_histogram,
    chronological_split, cross_activity_portion, duration_bin, duration_histogram, slide,
    unique_label_histogram, window_count,
)

T0 = dt.datetime(2010, 1, 4, 7, 30)


def stream(labels, gaps=None):
    gaps = gaps or [1] * len(labels)
    out, t = [], T0
    for i, (lab, g) in enumerate(zip(labels, gaps)):
        out.append(SensorEvent(f"M{i % 7:03d}", "Motion", 1, None, t, lab))
        t += dt.timedelta(seconds=g)
    return out


def random_stream(rng, n):
    labels, cur = [], OTHER
    for _ in range(n):
        if rng.random() < 0.08:
            cur = rng.choice(["A", "B", "C", OTHER])
        labels.append(str(cur))
    gaps = rng.integers(0, 400, n)
    return stream(labels, gaps.tolist())


def test_count_example():
    wins = slide(stream(["A"] * 100), WindowConfig(60, 6))
    assert len(wins) == 7
    assert [w.start for w in wins] == [0, 6, 12, 18, 24, 30, 36]


def test_short_stream():
    assert slide(stream(["A"] * 59), WindowConfig(60, 6)) == []


def test_last_event_rule():
    [first, *_] = slide(stream(["A"] * 59 + ["B"]), WindowConfig(60, 6))
    assert first.label == "B" and first.unique_labels == 2 and first.is_cross


def test_config_validation():
    with pytest.raises(WindowingError):
        WindowConfig(10, 11)
    with pytest.raises(WindowingError):
        WindowConfig(10, 0)
    assert WindowConfig.from_overlap(60, 0.9).s == 6
    assert WindowConfig.from_overlap(20, 0.5).s == 10
    assert WindowConfig.from_overlap(20, 0.99).s == 1


def test_portion():
    assert cross_activity_portion(slide(stream(["A"] * 30), WindowConfig(10, 2))) == 0.0
    with pytest.raises(EmptyInput):
        cross_activity_portion([])


def test_unique_label_histogram_simple():
    wins = slide(stream(["A"] * 19), WindowConfig(10, 1))
    assert unique_label_histogram(wins) == {"A": [10, 0, 0, 0, 0]}
    [w] = slide(stream(["B", "C", "A"]), WindowConfig(3, 1))
    assert unique_label_histogram([w]) == {"A": [0, 0, 1, 0, 0]}


def test_duration_bins():
    assert duration_bin(30) == 0
    assert duration_bin(300) == 2  # 5 min goes to the higher bin
    assert duration_bin(60) == 1
    assert duration_bin(3600) == 5
    assert duration_bin(0) == 0


def test_split_arithmetic():
    wins = slide(stream(["A"] * 109), WindowConfig(10, 1))
    assert len(wins) == 100
    with pytest.warns(UserWarning):
        tr, va, te, cx = chronological_split(wins, SplitSpec(0.8, 0.1))
    assert (len(tr), len(va), len(te), len(cx)) == (80, 10, 10, 0)
    assert max(w.start for w in tr) < min(w.start for w in va) <= max(w.start for w in va) < min(w.start for w in te)


def test_split_degenerate():
    wins = slide(stream(["A"] * 12), WindowConfig(10, 1))
    with pytest.raises(DegenerateSplit):
        chronological_split(wins, SplitSpec(0.8, 0.1))
    with pytest.raises(WindowingError):
        SplitSpec(0.9, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_cross_count_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    wins = slide(random_stream(rng, 300), WindowConfig(10, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr, va, te, cx = chronological_split(wins, SplitSpec(0.7, 0.1))
    assert len(tr) + len(va) + len(te) == len(wins)
    assert len({w.start for w in tr + va + te}) == len(wins)
    assert len(cx) == sum(1 for w in te if len({e.label for e in w.events}) > 1)


def test_activity_starts():
    evs = stream([OTHER, "A", "A", OTHER, "A", "B", "B"], gaps=[3600] * 7)
    hist = activity_start_histogram(evs)
    assert hist["A"][8] == 1 and hist["A"][11] == 1 and sum(hist["A"]) == 2
    assert hist["B"][12] == 1


def test_activity_start_single_span():
    hist = activity_start_histogram(stream(["A", "A", "A"]))
    assert hist == {"A": [0] * 7 + [1] + [0] * 16}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_activity_starts_match_span_scan(seed):
    rng = np.random.default_rng(seed)
    evs = random_stream(rng, 200)
    expect = {}
    for i, e in enumerate(evs):
        if e.label != OTHER and (i == 0 or evs[i - 1].label != e.label):
            expect.setdefault(e.label, [0] * 24)[e.timestamp.hour] += 1
    got = activity_start_histogram(evs)
    assert got == expect


def test_overlap_between_consecutive_windows():
    evs = stream(["A"] * 50)
    cfg = WindowConfig(12, 5)
    wins = slide(evs, cfg)
    for a, b in zip(wins, wins[1:]):
        assert len(set(map(id, a.events)) & set(map(id, b.events))) == cfg.w - cfg.s


def test_portion_grows_with_window_size_on_synthetic():
    rng = np.random.default_rng(7)
    evs = random_stream(rng, 5000)
    portions = [cross_activity_portion(slide(evs, WindowConfig(w, w // 10))) for w in (20, 40, 60, 80)]
    assert portions == sorted(portions)
    assert portions[0] < portions[-1]
