"""Parsing of CASAS-style ambient sensor logs into labeled event streams.

A CASAS log line looks like::

    2009-12-02  20:27:30.000059  M012  ON  Kitchen_Activity  begin

The last two columns are optional and only appear on lines that open or
close an annotated activity.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

log = logging.getLogger(__name__)

OTHER = "Other"

KIND_BY_PREFIX = {"M": "Motion", "D": "Door", "T": "Temperature", "I": "Item"}
KINDS = ("Motion", "Door", "Temperature", "Item", "Other")

# Extend with register_value() for dataset variants.
VALUE_STATUS = {
    "ON": 1,
    "OFF": 0,
    "OPEN": 1,
    "CLOSE": 0,
    "PRESENT": 1,
    "ABSENT": 0,
}

# Used when formatting an event back into a log line.
_CANONICAL_VALUE = {
    "Door": ("CLOSE", "OPEN"),
    "Item": ("ABSENT", "PRESENT"),
}

EVENT_CSV_HEADER = ("timestamp", "sensor_id", "kind", "status", "numeric_value", "label")


class IngestError(ValueError):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {reason}" if reason else ""))


class UnknownValue(IngestError):
    def __init__(self, sensor: str, value: str, line_no: int | None = None):
        self.sensor = sensor
        self.value = value
        self.line_no = line_no
        super().__init__(f"unknown value {value!r} for sensor {sensor} (line {line_no})")


class OutOfOrder(IngestError):
    def __init__(self, line_no: int | None, prev: dt.datetime, cur: dt.datetime):
        self.line_no = line_no
        super().__init__(f"timestamp goes backwards at line {line_no}: {cur} < {prev}")


class IngestWarning(UserWarning):
    pass


class UnmatchedEnd(IngestWarning):
    def __init__(self, activity: str, line_no: int):
        self.activity = activity
        self.line_no = line_no
        super().__init__(f"'{activity} end' at line {line_no} has no open begin")


class UnclosedBegin(IngestWarning):
    def __init__(self, activity: str, line_no: int):
        self.activity = activity
        self.line_no = line_no
        super().__init__(f"'{activity} begin' at line {line_no} never closed; span runs to end of log")


@dataclass(frozen=True)
class RawLine:
    date: str
    time: str
    sensor_id: str
    value: str
    activity: Optional[str] = None
    marker: Optional[str] = None  # "Begin" | "End"
    line_no: int = 0


@dataclass(frozen=True, slots=True)
class SensorEvent:
    sensor_id: str
    kind: str
    status: int
    numeric_value: Optional[float]
    timestamp: dt.datetime
    label: str = OTHER
    line_no: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TimeParts:
    month: int
    day: int
    weekday: int  # Monday = 0
    hour: int
    minute: int


class LabelVocabulary:
    """Sorted activity names with "Other" pinned to the last index."""

    def __init__(self, names: Iterable[str]):
        named = sorted({n for n in names if n != OTHER})
        self.classes: list[str] = named + [OTHER]
        self.index: dict[str, int] = {c: i for i, c in enumerate(self.classes)}

    @classmethod
    def from_events(cls, events: Iterable[SensorEvent]) -> "LabelVocabulary":
        return cls(e.label for e in events)

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def encode(self, name: str) -> int:
        return self.index[name]

    def decode(self, i: int) -> str:
        return self.classes[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.classes == other.classes


def register_value(token: str, status: int) -> None:
    if status not in (0, 1):
        raise ValueError("status must be 0 or 1")
    VALUE_STATUS[token.upper()] = status


def sensor_kind(sensor_id: str) -> str:
    return KIND_BY_PREFIX.get(sensor_id[:1].upper(), "Other")


def _parse_datetime(date: str, time: str) -> dt.datetime:
    # Fractional seconds are dropped: the stream has 1 s resolution.
    whole = time.split(".", 1)[0]
    return dt.datetime.strptime(f"{date} {whole}", "%Y-%m-%d %H:%M:%S")


def _parse_line(line: str, line_no: int) -> RawLine:
    parts = line.split()
    if len(parts) < 4:
        raise MalformedLine(line_no, "fewer than 4 fields")
    date, time, sensor, value = parts[:4]
    try:
        _parse_datetime(date, time)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None
    activity = marker = None
    if len(parts) >= 6:
        activity = parts[4]
        token = parts[5].lower()
        if token not in ("begin", "end"):
            raise MalformedLine(line_no, f"bad marker {parts[5]!r}")
        marker = "Begin" if token == "begin" else "End"
    elif len(parts) == 5:
        raise MalformedLine(line_no, "activity without begin/end marker")
    return RawLine(date, time, sensor, value, activity, marker, line_no)


def parse_log(text: str, strict: bool = False) -> list[RawLine]:
    """Split a CASAS log into RawLines.

    Malformed lines raise MalformedLine when ``strict`` is set; otherwise they
    are skipped with an IngestWarning.
    """
    lines = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            lines.append(_parse_line(line, line_no))
        except MalformedLine as exc:
            if strict:
                raise
            warnings.warn(str(exc), IngestWarning, stacklevel=2)
    return lines


def _parse_float(value: str) -> Optional[float]:
    try:
        x = float(value)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def to_events(lines: Sequence[RawLine], strict: bool = False) -> list[SensorEvent]:
    """Map RawLines to SensorEvents with label "Other".

    Unknown values raise UnknownValue under ``strict``; otherwise the line is
    skipped with a warning (its begin/end marker is still honoured by
    annotate_labels). Backward timestamps are reported the same way but the
    event is kept in file order.
    """
    events = []
    prev = None
    for ln in lines:
        kind = sensor_kind(ln.sensor_id)
        status = VALUE_STATUS.get(ln.value.upper())
        numeric = None
        if status is None:
            numeric = _parse_float(ln.value)
            if numeric is None:
                err = UnknownValue(ln.sensor_id, ln.value, ln.line_no)
                if strict:
                    raise err
                warnings.warn(str(err), IngestWarning, stacklevel=2)
                continue
            status = 1
        ts = _parse_datetime(ln.date, ln.time)
        if prev is not None and ts < prev:
            err = OutOfOrder(ln.line_no, prev, ts)
            if strict:
                raise err
            warnings.warn(str(err), IngestWarning, stacklevel=2)
        prev = ts
        events.append(SensorEvent(ln.sensor_id, kind, status, numeric, ts, OTHER, ln.line_no))
    return events


def annotate_labels(events: Sequence[SensorEvent], lines: Sequence[RawLine]) -> list[SensorEvent]:
    """Assign each event the most recently begun, still-open activity.

    Markers sit on event lines: a begin line's own event is inside the span,
    and so is an end line's event (the span closes after it).
    """
    by_line = {}
    for ev in events:
        by_line[ev.line_no] = ev
    out = []
    stack: list[tuple[str, int]] = []
    for ln in lines:
        if ln.marker == "Begin":
            stack.append((ln.activity, ln.line_no))
        ev = by_line.get(ln.line_no)
        if ev is not None:
            label = stack[-1][0] if stack else OTHER
            out.append(SensorEvent(ev.sensor_id, ev.kind, ev.status, ev.numeric_value,
                                   ev.timestamp, label, ev.line_no))
        if ln.marker == "End":
            for k in range(len(stack) - 1, -1, -1):
                if stack[k][0] == ln.activity:
                    del stack[k]
                    break
            else:
                warnings.warn(UnmatchedEnd(ln.activity, ln.line_no), stacklevel=2)
    for activity, line_no in stack:
        warnings.warn(UnclosedBegin(activity, line_no), stacklevel=2)
    return out


def load_log(path: str | Path, strict: bool = False) -> list[SensorEvent]:
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    lines = parse_log(text, strict=strict)
    return annotate_labels(to_events(lines, strict=strict), lines)


def decompose_timestamp(ts: dt.datetime) -> TimeParts:
    return TimeParts(ts.month, ts.day, ts.weekday(), ts.hour, ts.minute)


def format_event(ev: SensorEvent) -> str:
    """Render an event as a CASAS log line (without annotation columns)."""
    if ev.numeric_value is not None:
        value = repr(ev.numeric_value)
    else:
        off, on = _CANONICAL_VALUE.get(ev.kind, ("OFF", "ON"))
        value = on if ev.status else off
    return f"{ev.timestamp:%Y-%m-%d}\t{ev.timestamp:%H:%M:%S}\t{ev.sensor_id}\t{value}"


def _fmt_numeric(x: Optional[float]) -> str:
    return "" if x is None else repr(x)


def write_events_csv(events: Iterable[SensorEvent], dest) -> None:
    """Write the canonical event CSV to a path or text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_events_csv(events, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(EVENT_CSV_HEADER)
    for ev in events:
        w.writerow([ev.timestamp.isoformat(), ev.sensor_id, ev.kind, ev.status,
                    _fmt_numeric(ev.numeric_value), ev.label])


def read_events_csv(src) -> list[SensorEvent]:
    if isinstance(src, (str, Path)):
        with open(src, newline="", encoding="utf-8") as fh:
            return read_events_csv(fh)
    reader = csv.DictReader(src)
    missing = set(EVENT_CSV_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise IngestError(f"event CSV missing columns: {sorted(missing)}")
    events = []
    for i, row in enumerate(reader, start=2):
        try:
            num = row["numeric_value"]
            events.append(SensorEvent(
                row["sensor_id"], row["kind"], int(row["status"]),
                float(num) if num else None,
                dt.datetime.fromisoformat(row["timestamp"]), row["label"], i,
            ))
        except (TypeError, ValueError) as exc:
            raise MalformedLine(i, str(exc)) from None
    return events


def events_to_csv_text(events: Iterable[SensorEvent]) -> str:
    buf = io.StringIO()
    write_events_csv(events, buf)
    return buf.getvalue()


def first_days(events: Sequence[SensorEvent], days: int) -> list[SensorEvent]:
    """Events whose timestamp falls within ``days`` days of the first event."""
    if not events:
        return []
    cutoff = events[0].timestamp + dt.timedelta(days=days)
    return [e for e in events if e.timestamp < cutoff]
