"""Day-ahead and tertiary regulation price series.

Prices are kept in EUR/MWh as float arrays.  A slot in which the tertiary
market did not trade holds NaN ("absent"); the day-ahead series may not have
gaps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

DEFAULT_COLUMNS = {
    "timestamp": "timestamp",
    "dayahead": "dayahead_eur_mwh",
    "tertiary_up": "tertiary_up_eur_mwh",
    "tertiary_down": "tertiary_down_eur_mwh",
    "sell_dayahead": "sell_dayahead_eur_mwh",
}


class PriceFileError(ValueError):
    """Malformed price file; ``line`` is the 1-based line in the file."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _array(values) -> np.ndarray:
    a = np.array(values, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PriceSet:
    dayahead: np.ndarray
    tertiary_up: np.ndarray
    tertiary_down: np.ndarray
    sell_dayahead: np.ndarray | None = None
    timestamps: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.dayahead)
        for name in ("dayahead", "tertiary_up", "tertiary_down", "sell_dayahead"):
            v = getattr(self, name)
            if v is None:
                continue
            v = _array(v)
            if v.shape != (n,):
                raise ValueError(f"{name} has {v.size} values, dayahead has {n}")
            if np.any(np.isinf(v)):
                raise ValueError(f"{name} contains infinite values")
            object.__setattr__(self, name, v)
        if np.any(np.isnan(self.dayahead)):
            raise ValueError("dayahead prices may not be absent")
        if self.sell_dayahead is not None and np.any(np.isnan(self.sell_dayahead)):
            raise ValueError("sell_dayahead prices may not be absent")
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != n:
                raise ValueError("one timestamp per slot required")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.dayahead)

    def __eq__(self, other):
        if not isinstance(other, PriceSet):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))

        return (same(self.dayahead, other.dayahead) and same(self.tertiary_up, other.tertiary_up)
                and same(self.tertiary_down, other.tertiary_down)
                and same(self.sell_dayahead, other.sell_dayahead) and self.timestamps == other.timestamps)

    def slice(self, start: int, stop: int) -> "PriceSet":
        return PriceSet(
            self.dayahead[start:stop],
            self.tertiary_up[start:stop],
            self.tertiary_down[start:stop],
            None if self.sell_dayahead is None else self.sell_dayahead[start:stop],
            None if self.timestamps is None else self.timestamps[start:stop],
        )

    @classmethod
    def concat(cls, parts) -> "PriceSet":
        parts = list(parts)
        sell = None
        if all(p.sell_dayahead is not None for p in parts):
            sell = np.concatenate([p.sell_dayahead for p in parts])
        ts = None
        if all(p.timestamps is not None for p in parts):
            ts = tuple(t for p in parts for t in p.timestamps)
        return cls(
            np.concatenate([p.dayahead for p in parts]),
            np.concatenate([p.tertiary_up for p in parts]),
            np.concatenate([p.tertiary_down for p in parts]),
            sell,
            ts,
        )


def spreads(ps: PriceSet) -> tuple[np.ndarray, np.ndarray]:
    """Up-spread (tertiary up minus day-ahead) and down-spread (day-ahead minus
    tertiary down) per slot; NaN where the tertiary price is absent."""
    return ps.tertiary_up - ps.dayahead, ps.dayahead - ps.tertiary_down


def _parse_time(text: str) -> datetime:
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    ts = datetime.fromisoformat(t)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def _cell(row, idx, path, line, name, required):
    raw = row[idx].strip() if idx is not None and idx < len(row) else ""
    if raw == "":
        if required:
            raise PriceFileError(path, line, f"missing {name} price")
        return math.nan
    try:
        v = float(raw)
    except ValueError:
        raise PriceFileError(path, line, f"{name} value {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise PriceFileError(path, line, f"{name} value {raw!r} is not finite")
    return v


def load_prices(path, columns: dict | None = None, slot_hours: float = 1.0) -> PriceSet:
    """Read a price CSV with a header row.

    ``columns`` maps the logical names of :data:`DEFAULT_COLUMNS` to header
    names.  Timestamps (ISO 8601; offsets are converted to UTC) must increase
    by exactly ``slot_hours``; a repeated timestamp, as produced by a naive
    local clock at a DST change, is an error.
    """
    path = Path(path)
    cols = dict(DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read price file {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PriceFileError(path, 1, "empty file, header expected") from None
        pos = {h: i for i, h in enumerate(header)}
        for key in ("timestamp", "dayahead", "tertiary_up", "tertiary_down"):
            if cols[key] not in pos:
                raise PriceFileError(path, 1, f"missing column {cols[key]!r}")
        it, ida, iup, idn = (pos[cols[k]] for k in ("timestamp", "dayahead", "tertiary_up", "tertiary_down"))
        isell = pos.get(cols["sell_dayahead"])
        stamps, da, up, dn, sell = [], [], [], [], []
        step = timedelta(hours=slot_hours)
        prev = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > len(header):
                raise PriceFileError(path, line, f"{len(row)} fields, header has {len(header)}")
            raw_ts = row[it].strip() if it < len(row) else ""
            try:
                ts = _parse_time(raw_ts)
            except ValueError:
                raise PriceFileError(path, line, f"bad timestamp {raw_ts!r}") from None
            if prev is not None:
                if ts == prev:
                    raise PriceFileError(path, line, f"duplicate timestamp {raw_ts!r}")
                if ts < prev:
                    raise PriceFileError(path, line, f"timestamp {raw_ts!r} goes back in time")
                if ts - prev != step:
                    raise PriceFileError(path, line, f"timestamp {raw_ts!r} is not {slot_hours:g} h after the previous one")
            prev = ts
            stamps.append(raw_ts)
            da.append(_cell(row, ida, path, line, "dayahead", True))
            up.append(_cell(row, iup, path, line, "tertiary_up", False))
            dn.append(_cell(row, idn, path, line, "tertiary_down", False))
            if isell is not None:
                sell.append(_cell(row, isell, path, line, "sell_dayahead", True))
    if not da:
        raise PriceFileError(path, None, "no price rows")
    return PriceSet(np.array(da), np.array(up), np.array(dn), np.array(sell) if isell is not None else None,
                    tuple(stamps))


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_prices(ps: PriceSet, path, start: datetime | None = None, slot_hours: float = 1.0) -> None:
    """Write ``ps`` in the layout :func:`load_prices` reads (full precision).

    Without stored timestamps the slots are stamped from ``start`` (default
    2023-01-02T00:00, a Monday).
    """
    if ps.timestamps is not None:
        stamps = list(ps.timestamps)
    else:
        t0 = start or datetime(2023, 1, 2)
        stamps = [(t0 + timedelta(hours=slot_hours * i)).isoformat() for i in range(len(ps))]
    header = [DEFAULT_COLUMNS[k] for k in ("timestamp", "dayahead", "tertiary_up", "tertiary_down")]
    if ps.sell_dayahead is not None:
        header.append(DEFAULT_COLUMNS["sell_dayahead"])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, ts in enumerate(stamps):
            row = [ts, _fmt(ps.dayahead[i]), _fmt(ps.tertiary_up[i]), _fmt(ps.tertiary_down[i])]
            if ps.sell_dayahead is not None:
                row.append(_fmt(ps.sell_dayahead[i]))
            w.writerow(row)
