"""PV time-series ingestion, cleaning, scaling, windowing and fold planning.

CSV schema: ``timestamp,Ta,Tm,I3,I15,P`` with ISO-8601 timestamps. Empty
cells (or ``nan``) are read as missing values and left for :func:`clean`.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import CleaningError, ContractError, ParseError, SchemaError, ScalingError

COLUMNS = ("Ta", "Tm", "I3", "I15", "P")
HEADER = ("timestamp",) + COLUMNS
POWER = COLUMNS.index("P")
HOUR = np.timedelta64(1, "h")
DAY = np.timedelta64(24, "h")
EXCLUDED_DATES = ("2013-12-31",)


@dataclass(frozen=True)
class TimeSeriesFrame:
    timestamps: np.ndarray  # datetime64[s]
    values: np.ndarray  # [T, 5] in COLUMNS order, NaN marks a missing cell

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.values, dtype=np.float64).reshape(len(ts), len(COLUMNS))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.timestamps)

    def column(self, name):
        return self.values[:, COLUMNS.index(name)]

    @property
    def power(self):
        return self.values[:, POWER]

    def rows(self, start, stop):
        return TimeSeriesFrame(self.timestamps[start:stop], self.values[start:stop])

    def span(self):
        if not len(self):
            return None, None
        return str(self.timestamps[0]), str(self.timestamps[-1])

    def is_hourly(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) == HOUR))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HEADER)
            for t, row in zip(self.timestamps, self.values):
                w.writerow([str(t).replace("T", " ")] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def _parse_time(text, line):
    try:
        return np.datetime64(datetime.fromisoformat(text.strip()).replace(tzinfo=None), "s")
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line) from None


def _parse_value(text, line, col):
    text = text.strip()
    if text == "" or text.lower() == "nan":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric {col} value {text!r}", line) from None


def load_csv(path) -> TimeSeriesFrame:
    """Parse rows in file order; duplicates, gaps and blanks are kept for the cleaner."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        unknown = sorted(set(header) - set(HEADER))
        missing = [c for c in HEADER if c not in header]
        if unknown or missing:
            raise SchemaError(f"{path}: unknown columns {unknown}, missing columns {missing}")
        order = [header.index(c) for c in HEADER]
        stamps, rows = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", line)
            stamps.append(_parse_time(rec[order[0]], line))
            rows.append([_parse_value(rec[i], line, c) for i, c in zip(order[1:], COLUMNS)])
    return TimeSeriesFrame(np.array(stamps, dtype="datetime64[s]"), np.array(rows, dtype=np.float64).reshape(-1, 5))


@dataclass
class CleaningReport:
    rows_in: int = 0
    rows_out: int = 0
    dropped_excluded_dates: int = 0
    duplicates_dropped: int = 0
    missing_hours: int = 0
    day_mean_fills: int = 0
    interpolated_cells: int = 0
    span: tuple = (None, None)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def clean(frame: TimeSeriesFrame, excluded_dates=EXCLUDED_DATES, max_gap: int = 48, with_report: bool = False):
    """Return a gap-free hourly frame.

    Timestamps are floored to the hour; rows on ``excluded_dates`` are dropped;
    each missing cell at hour ``t`` gets the mean of ``t - 24h`` and ``t + 24h``
    when both are observed, and remaining interior runs of at most ``max_gap``
    hours are linearly interpolated. Anything else raises :class:`CleaningError`.
    """
    rep = CleaningReport(rows_in=len(frame))
    ts = frame.timestamps.astype("datetime64[h]").astype("datetime64[s]")
    vals = frame.values
    days = ts.astype("datetime64[D]")
    keep = ~np.isin(days, np.array(excluded_dates, dtype="datetime64[D]"))
    rep.dropped_excluded_dates = int((~keep).sum())
    ts, vals = ts[keep], vals[keep]
    if len(ts) == 0:
        raise CleaningError("no rows left after exclusions")
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    uniq, first = np.unique(ts, return_index=True)
    rep.duplicates_dropped = len(ts) - len(uniq)
    ts, vals = uniq, vals[first]

    # excluded days stay out of the grid, so continuity holds over the retained span
    grid = np.arange(ts[0], ts[-1] + HOUR, HOUR)
    grid = grid[~np.isin(grid.astype("datetime64[D]"), np.array(excluded_dates, dtype="datetime64[D]"))]
    pos = np.searchsorted(grid, ts)
    full = np.full((len(grid), len(COLUMNS)), np.nan)
    full[pos] = vals
    rep.missing_hours = len(grid) - len(ts)

    observed = full.copy()
    day = np.timedelta64(24, "h")
    for r, c in np.argwhere(np.isnan(full)):
        nb = np.searchsorted(grid, [grid[r] - day, grid[r] + day])
        if nb[1] >= len(grid) or grid[nb[0]] != grid[r] - day or grid[nb[1]] != grid[r] + day:
            continue
        before, after = observed[nb[0], c], observed[nb[1], c]
        if not (np.isnan(before) or np.isnan(after)):
            full[r, c] = 0.5 * (before + after)
            rep.day_mean_fills += 1

    bad = []
    for c in range(len(COLUMNS)):
        col = full[:, c]
        miss = np.isnan(col)
        if not miss.any():
            continue
        idx = np.flatnonzero(~miss)
        runs = np.split(np.flatnonzero(miss), np.flatnonzero(np.diff(np.flatnonzero(miss)) > 1) + 1)
        for run in runs:
            interior = idx.size and run[0] > idx[0] and run[-1] < idx[-1]
            if not interior or len(run) > max_gap:
                bad.extend(str(grid[i]) for i in run)
        if not bad:
            col[miss] = np.interp(np.flatnonzero(miss), idx, col[idx])
            rep.interpolated_cells += int(miss.sum())
    if bad:
        raise CleaningError(f"{len(bad)} missing cells cannot be filled (no day neighbours, not interior or gap too long)",
                            sorted(set(bad)))
    out = TimeSeriesFrame(grid, full)
    rep.rows_out = len(out)
    rep.span = out.span()
    return (out, rep) if with_report else out


@dataclass(frozen=True)
class ScalerStats:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins, maxs = np.asarray(self.mins, float), np.asarray(self.maxs, float)
        if np.any(~(maxs > mins)):
            raise ScalingError(f"degenerate columns {[COLUMNS[i] for i in np.flatnonzero(~(maxs > mins))]}: max <= min")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def apply(self, values):
        return (np.asarray(values, float) - self.mins) / (self.maxs - self.mins)

    def invert(self, scaled):
        return np.asarray(scaled, float) * (self.maxs - self.mins) + self.mins

    def invert_power(self, scaled):
        return np.asarray(scaled, float) * (self.maxs[POWER] - self.mins[POWER]) + self.mins[POWER]

    def to_dict(self):
        return {"columns": list(COLUMNS), "min": [float(v) for v in self.mins], "max": [float(v) for v in self.maxs]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["min"], float), np.array(d["max"], float))


def fit_scaler(frame_or_values, train_range=None) -> ScalerStats:
    """Per-column min/max over ``train_range`` rows only (a ``(start, stop)`` pair or index array)."""
    vals = frame_or_values.values if isinstance(frame_or_values, TimeSeriesFrame) else np.asarray(frame_or_values, float)
    if train_range is not None:
        vals = vals[slice(*train_range)] if isinstance(train_range, tuple) else vals[np.asarray(train_range)]
    if len(vals) == 0:
        raise ScalingError("empty training range")
    return ScalerStats(np.nanmin(vals, axis=0), np.nanmax(vals, axis=0))


def apply_scaler(stats: ScalerStats, frame: TimeSeriesFrame) -> TimeSeriesFrame:
    return TimeSeriesFrame(frame.timestamps, stats.apply(frame.values))


def invert_scaler(stats: ScalerStats, frame: TimeSeriesFrame) -> TimeSeriesFrame:
    return TimeSeriesFrame(frame.timestamps, stats.invert(frame.values))


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray  # [N, W, 5]
    targets: np.ndarray  # [N, H] power
    starts: np.ndarray  # first row of each sample's input window
    window: int
    horizon: int
    stride: int

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx):
        idx = np.asarray(idx)
        return WindowedDataset(self.inputs[idx], self.targets[idx], self.starts[idx], self.window, self.horizon, self.stride)

    def rows_used(self, idx=None) -> np.ndarray:
        """Sorted unique series rows touched (inputs and targets) by the selected samples."""
        starts = self.starts if idx is None else self.starts[np.asarray(idx)]
        span = self.window + self.horizon
        return np.unique((starts[:, None] + np.arange(span)[None, :]).ravel())

    def scaled(self, stats: ScalerStats) -> "WindowedDataset":
        t = (self.targets - stats.mins[POWER]) / (stats.maxs[POWER] - stats.mins[POWER])
        return WindowedDataset(stats.apply(self.inputs), t, self.starts, self.window, self.horizon, self.stride)


def n_windows(T, W, H, s):
    return (T - W - H) // s + 1


def window(frame_or_values, W: int, H: int, s: int = 1) -> WindowedDataset:
    vals = frame_or_values.values if isinstance(frame_or_values, TimeSeriesFrame) else np.asarray(frame_or_values, float)
    T = len(vals)
    if W < 1 or H < 1 or s < 1:
        raise ContractError("window, horizon and stride must be >= 1")
    if T < W + H:
        raise ContractError(f"series of {T} rows is shorter than window+horizon={W + H}")
    n = n_windows(T, W, H, s)
    starts = np.arange(n) * s
    x = np.lib.stride_tricks.sliding_window_view(vals, W, axis=0)[starts].transpose(0, 2, 1)
    y = np.lib.stride_tricks.sliding_window_view(vals[:, POWER], H)[starts + W]
    return WindowedDataset(np.ascontiguousarray(x), np.ascontiguousarray(y), starts, W, H, s)


@dataclass(frozen=True)
class Fold:
    index: int
    test_start: int
    test_stop: int
    train: np.ndarray
    excluded: tuple  # ((start, stop), ...) buffer ranges removed from training

    @property
    def test(self):
        return np.arange(self.test_start, self.test_stop)


@dataclass(frozen=True)
class FoldPlan:
    n_samples: int
    buffer: int
    folds: tuple = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)

    def to_document(self):
        return {
            "n_samples": self.n_samples,
            "buffer": self.buffer,
            "folds": [
                {"fold": f.index, "test_start": f.test_start, "test_stop": f.test_stop,
                 "n_train": int(len(f.train)), "excluded": [list(r) for r in f.excluded]}
                for f in self.folds
            ],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh, indent=2)


def kfold_plan(N: int, k: int = 5, buffer: int = 24) -> FoldPlan:
    """Contiguous test blocks; training drops ``buffer`` samples on each side of the block."""
    if k < 2:
        raise ContractError("k-fold needs k >= 2")
    if buffer < 0:
        raise ContractError("buffer must be non-negative")
    if N <= k * (2 * buffer + 1):
        raise ContractError(f"N={N} too small for k={k} folds with buffer {buffer}")
    bounds = [(i * N) // k for i in range(k + 1)]
    folds = []
    all_idx = np.arange(N)
    for i in range(k):
        lo, hi = bounds[i], bounds[i + 1]
        ex_lo, ex_hi = max(0, lo - buffer), min(N, hi + buffer)
        train = np.concatenate([all_idx[:ex_lo], all_idx[ex_hi:]])
        excluded = tuple(r for r in ((ex_lo, lo), (hi, ex_hi)) if r[1] > r[0])
        folds.append(Fold(i, lo, hi, train, excluded))
    return FoldPlan(N, buffer, tuple(folds))


def chronological_split(frame: TimeSeriesFrame, boundary):
    """Split into rows before ``boundary`` and rows from it on.

    ``boundary`` is a timestamp (str / datetime64), a row index, or a fraction
    in (0, 1) giving ``floor(fraction * T)`` training rows.
    """
    T = len(frame)
    if isinstance(boundary, float) and 0.0 < boundary < 1.0:
        cut = int(np.floor(boundary * T))
    elif isinstance(boundary, (int, np.integer)):
        cut = int(boundary)
    else:
        cut = int(np.searchsorted(frame.timestamps, np.datetime64(boundary, "s")))
    if not 0 < cut < T:
        raise ContractError(f"split boundary {boundary!r} leaves an empty partition (cut={cut}, rows={T})")
    return frame.rows(0, cut), frame.rows(cut, T)


def synth_generate(days: int, seed: int = 0, start: str = "2012-03-05T00:00") -> TimeSeriesFrame:
    """Deterministic PV-like hourly series.

    Irradiance is a clipped diurnal sinusoid with seasonal day length and
    amplitude, attenuated by a per-day cloud factor plus hourly AR(1)
    fluctuations. Power follows the 15-degree irradiance with a module
    temperature derating; night hours have exactly zero irradiance and power.
    """
    if days < 2:
        raise ContractError("synthetic series needs at least 2 days")
    rng = np.random.default_rng(seed)
    T = days * 24
    ts = np.datetime64(start, "s") + np.arange(T) * HOUR
    dates = ts.astype("datetime64[D]")
    doy = ((dates - ts.astype("datetime64[Y]").astype("datetime64[D]")) // np.timedelta64(1, "D")).astype(float)
    hour = (ts - ts.astype("datetime64[D]")).astype("timedelta64[h]").astype(float)
    season = np.cos(2 * np.pi * (doy - 172.0) / 365.25)  # +1 near the June solstice
    daylen = 12.0 + 3.0 * season
    sunrise = 12.0 - daylen / 2
    phase = (hour + 0.5 - sunrise) / daylen
    clear = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    peak = 900.0 + 150.0 * season
    cloud_day = np.repeat(rng.beta(5.0, 1.6, days), 24)
    ar = np.zeros(T)
    eps = rng.normal(0.0, 0.06, T)
    for i in range(1, T):
        ar[i] = 0.8 * ar[i - 1] + eps[i]
    cloud = np.clip(cloud_day + ar, 0.05, 1.0)
    i15 = peak * clear * cloud
    i3 = i15 * (0.94 + 0.04 * season) * np.where(clear > 0, 1.0 + rng.normal(0, 0.01, T), 1.0)
    ta = 16.0 + 9.0 * season + 5.0 * np.sin(2 * np.pi * (hour - 9.0) / 24) + rng.normal(0, 0.8, T)
    tm = ta + 0.028 * i15
    p = np.clip(0.96 * i15 * (1.0 - 0.004 * (tm - 25.0)), 0.0, None)
    p = np.where(clear > 0, p, 0.0)
    return TimeSeriesFrame(ts, np.column_stack([ta, tm, i3, i15, p]))
