"""Energy disaggregation of hourly smart-meter data.

The household model has four categories:

========  ==============================  ==========================  ================
Category  Features                        Loss                        Regularizer
========  ==============================  ==========================  ================
base      hour-of-day indicators          ``||y - X theta||_1``       ``||D y||^2``
cooling   RBFs of temperature above 70F   ``||S_2 (y - X theta)||_1`` ``0.1 ||D y||_1``
heating   RBFs of temperature below 50F   ``||S_2 (y - X theta)||_1`` ``0.1 ||D y||_1``
other     none                            ``||y||_1``                 ``0.05 ||D y||_1``
========  ==============================  ==========================  ================

All categories are constrained to be nonnegative. Timestamps are naive
local standard time; no daylight-saving arithmetic is done, so a repeated
hour is rejected as non-monotone and a skipped hour is handled as a gap.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .core import FeatureBlock, SeparationProblem, SourceModelSpec, build_problem
from .errors import NegativeUsage, NonFinite, NonHourly, NonMonotoneTimestamps, NoOverlap, ParseError
from .linops import COOLING_CENTERS, HEATING_CENTERS, Diff, Identity, SmoothingBand, hour_features, rbf_features
from .solver import SolverConfig, separate
from .synth import make_rng

__all__ = [
    "CATEGORIES",
    "MeterSeries",
    "TemperatureSeries",
    "AlignedSeries",
    "WeeklySums",
    "DisaggReport",
    "load_meter_csv",
    "load_weather_csv",
    "write_meter_csv",
    "write_weather_csv",
    "align_series",
    "build_energy_problem",
    "weekly_aggregate",
    "disaggregate",
    "disaggregate_batch",
    "write_report",
    "load_components_csv",
    "batch_weekly",
    "synthetic_home",
]

log = logging.getLogger(__name__)

CATEGORIES = ("base", "cooling", "heating", "other")
COOLING_THRESHOLD = 70.0
HEATING_THRESHOLD = 50.0
MAX_INTERP_GAP = 3
TEMP_RANGE = (-50.0, 150.0)
HOUR = np.timedelta64(3600, "s")


@dataclass(frozen=True, eq=False)
class MeterSeries:
    timestamps: np.ndarray  # datetime64[s]
    kwh: np.ndarray

    def __post_init__(self):
        ts, kwh = _validate_series(self.timestamps, self.kwh, "kwh")
        if np.any(kwh < 0):
            i = int(np.argmax(kwh < 0))
            raise NegativeUsage(f"negative usage {kwh[i]} at {ts[i]}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "kwh", kwh)

    def __len__(self):
        return len(self.kwh)


@dataclass(frozen=True, eq=False)
class TemperatureSeries:
    timestamps: np.ndarray
    temp_f: np.ndarray

    def __post_init__(self):
        ts, temp = _validate_series(self.timestamps, self.temp_f, "temp_f")
        lo, hi = TEMP_RANGE
        bad = (temp <= lo) | (temp >= hi)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"implausible temperature {temp[i]}F at {ts[i]}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "temp_f", temp)

    def __len__(self):
        return len(self.temp_f)


def _validate_series(ts, values, name):
    ts = np.asarray(ts, dtype="datetime64[s]")
    values = np.asarray(values, dtype=float)
    if ts.ndim != 1 or ts.shape != values.shape:
        raise ValueError(f"timestamps and {name} must be vectors of equal length")
    if len(ts) == 0:
        raise ValueError("series is empty")
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"{name} contains NaN or Inf")
    if np.any(ts.astype(np.int64) % 3600):
        raise NonHourly("timestamps must fall on whole hours")
    d = np.diff(ts)
    if np.any(d <= np.timedelta64(0, "s")):
        i = int(np.argmax(d <= np.timedelta64(0, "s")))
        raise NonMonotoneTimestamps(f"timestamp {ts[i + 1]} does not follow {ts[i]}")
    return ts, values


def _parse_time(text):
    dt = datetime.fromisoformat(text.strip())
    # wall-clock time is kept; any UTC offset is ignored by design
    return np.datetime64(dt.replace(tzinfo=None), "s")


def _read_two_column(path, value_name):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    ts, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file", row=1)
        header = [h.strip().lower() for h in header]
        if header != ["timestamp", value_name]:
            raise ParseError(f"{path}: expected header 'timestamp,{value_name}', got {','.join(header)}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}: expected 2 fields, got {len(row)}", row=lineno)
            try:
                ts.append(_parse_time(row[0]))
            except ValueError as exc:
                raise ParseError(f"{path}: bad timestamp {row[0]!r}", row=lineno, column="timestamp") from exc
            try:
                vals.append(float(row[1]))
            except ValueError as exc:
                raise ParseError(f"{path}: bad number {row[1]!r}", row=lineno, column=value_name) from exc
    if not ts:
        raise ParseError(f"{path}: no data rows", row=2)
    return np.array(ts, dtype="datetime64[s]"), np.array(vals)


def load_meter_csv(path) -> MeterSeries:
    """Read a ``timestamp,kwh`` file with ISO-8601 hourly timestamps."""
    return MeterSeries(*_read_two_column(path, "kwh"))


def load_weather_csv(path) -> TemperatureSeries:
    """Read a ``timestamp,temp_f`` file with ISO-8601 hourly timestamps."""
    return TemperatureSeries(*_read_two_column(path, "temp_f"))


def _fmt_time(t):
    return str(np.datetime64(t, "s"))


def _write_two_column(path, ts, vals, value_name):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", value_name])
        for t, v in zip(ts, vals):
            w.writerow([_fmt_time(t), repr(float(v))])


def write_meter_csv(path, meter: MeterSeries) -> None:
    _write_two_column(path, meter.timestamps, meter.kwh, "kwh")


def write_weather_csv(path, weather: TemperatureSeries) -> None:
    _write_two_column(path, weather.timestamps, weather.temp_f, "temp_f")


@dataclass(frozen=True, eq=False)
class AlignedSeries:
    timestamps: np.ndarray
    kwh: np.ndarray
    temp_f: np.ndarray
    gaps: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.kwh)


def _runs(mask):
    """(start, stop) index pairs of the True runs in a boolean vector."""
    m = np.concatenate(([False], np.asarray(mask, dtype=bool), [False]))
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def align_series(meter: MeterSeries, weather: TemperatureSeries) -> AlignedSeries:
    """Put meter and temperature readings on a common hourly grid.

    The grid covers the overlap of the two series. Temperature gaps of at
    most three hours between two readings are filled by linear
    interpolation; hours with no meter reading or inside a longer
    temperature gap are dropped. ``gaps`` lists every interpolated and
    dropped span.

    Raises
    ------
    NoOverlap
        If the two series share no hour.
    """
    start = max(meter.timestamps[0], weather.timestamps[0])
    stop = min(meter.timestamps[-1], weather.timestamps[-1])
    if start > stop:
        raise NoOverlap(f"meter ({meter.timestamps[0]}..{meter.timestamps[-1]}) and weather "
                        f"({weather.timestamps[0]}..{weather.timestamps[-1]}) do not overlap")
    grid = np.arange(start, stop + HOUR, HOUR)
    n = len(grid)
    kwh = np.full(n, np.nan)
    temp = np.full(n, np.nan)
    for ts, vals, out in ((meter.timestamps, meter.kwh, kwh), (weather.timestamps, weather.temp_f, temp)):
        sel = (ts >= start) & (ts <= stop)
        idx = ((ts[sel] - start) // HOUR).astype(int)
        out[idx] = vals[sel]

    have_t = ~np.isnan(temp)
    interpolated, temp_dropped = [], []
    drop = np.isnan(kwh)
    for a, b in _runs(~have_t):
        bounded = a > 0 and b < n
        if bounded and b - a <= MAX_INTERP_GAP:
            xs = np.array([a - 1, b])
            temp[a:b] = np.interp(np.arange(a, b), xs, temp[xs])
            interpolated.append((a, b))
        else:
            drop[a:b] = True
            temp_dropped.append((a, b))
    meter_dropped = _runs(np.isnan(kwh))

    def span(a, b, reason):
        return {"start": _fmt_time(grid[a]), "end": _fmt_time(grid[b - 1]), "hours": int(b - a), "reason": reason}

    gaps = {
        "grid_start": _fmt_time(grid[0]),
        "grid_end": _fmt_time(grid[-1]),
        "grid_hours": int(n),
        "kept_hours": int(n - drop.sum()),
        "interpolated": [span(a, b, "temperature gap interpolated") for a, b in interpolated],
        "dropped": sorted(
            [span(a, b, "meter gap") for a, b in meter_dropped]
            + [span(a, b, "temperature gap") for a, b in temp_dropped],
            key=lambda s: (s["start"], s["reason"]),
        ),
    }
    keep = ~drop
    return AlignedSeries(grid[keep], kwh[keep], temp[keep], gaps)


def build_energy_problem(aligned: AlignedSeries, cooling_centers=None, heating_centers=None,
                         bandwidth: float = 5.0, drop_inactive: bool = False) -> SeparationProblem:
    """Four-category separation problem for one home (see module docstring).

    With ``drop_inactive`` a weather category whose features are identically
    zero (no hour beyond its threshold) is left out of the problem; its
    usage is then exactly zero rather than a solver-tolerance residue.
    """
    T = len(aligned)
    base = FeatureBlock("base", hour_features(aligned.timestamps, strict=False))
    cool = FeatureBlock("cooling", rbf_features(aligned.temp_f, "above", COOLING_THRESHOLD, cooling_centers, bandwidth))
    heat = FeatureBlock("heating", rbf_features(aligned.temp_f, "below", HEATING_THRESHOLD, heating_centers, bandwidth))
    other = FeatureBlock.empty("other", T)
    S2 = SmoothingBand(2)
    specs = [
        SourceModelSpec("l1", Identity(), 1.0, "sq_l2", Diff(), 1.0, nonneg=True),
        SourceModelSpec("l1", S2, 1.0, "l1", Diff(), 0.1, nonneg=True),
        SourceModelSpec("l1", S2, 1.0, "l1", Diff(), 0.1, nonneg=True),
        SourceModelSpec("l1", Identity(), 1.0, "l1", Diff(), 0.05, nonneg=True),
    ]
    sources = list(zip([base, cool, heat, other], specs))
    if drop_inactive:
        sources = [(b, sp) for b, sp in sources if b.name not in ("cooling", "heating") or np.any(b.matrix)]
    return build_problem(aligned.kwh, sources)


@dataclass(frozen=True, eq=False)
class WeeklySums:
    week_start: np.ndarray  # datetime64[D], Mondays
    sums: np.ndarray
    hours: np.ndarray
    partial: np.ndarray


def _week_index(timestamps):
    days = np.asarray(timestamps, dtype="datetime64[D]").astype(np.int64)
    # 1970-01-01 was a Thursday; shifting by 3 days puts week boundaries on Mondays
    return (days + 3) // 7


def weekly_aggregate(hourly, timestamps) -> WeeklySums:
    """Calendar-week sums, weeks starting Monday 00:00.

    A week with fewer than 168 readings is flagged ``partial``; boundary
    weeks are included either way.
    """
    hourly = np.asarray(hourly, dtype=float)
    wk = _week_index(timestamps)
    if hourly.shape[0] != len(wk):
        raise ValueError("hourly values and timestamps differ in length")
    if len(wk) == 0:
        return WeeklySums(np.array([], dtype="datetime64[D]"), np.zeros(0), np.zeros(0, int), np.zeros(0, bool))
    uniq, inv = np.unique(wk, return_inverse=True)
    sums = np.zeros((len(uniq),) + hourly.shape[1:])
    np.add.at(sums, inv, hourly)
    hours = np.bincount(inv, minlength=len(uniq))
    starts = (uniq * 7 - 3).astype("datetime64[D]")
    return WeeklySums(starts, sums, hours, hours < 168)


@dataclass(frozen=True, eq=False)
class DisaggReport:
    timestamps: np.ndarray
    meter: np.ndarray
    components: np.ndarray  # T x 4
    fitted: np.ndarray  # T x 4, X_i theta_i
    theta: dict
    shares: dict
    weekly: WeeklySums
    diagnostics: dict
    gaps: dict
    flags: list

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "categories": list(CATEGORIES),
            "shares": {k: clean(v) for k, v in self.shares.items()},
            "totals_kwh": {c: float(self.components[:, i].sum()) for i, c in enumerate(CATEGORIES)},
            "theta": {k: [float(x) for x in v] for k, v in self.theta.items()},
            "diagnostics": self.diagnostics,
            "gaps": self.gaps,
            "flags": list(self.flags),
            "weekly": [
                {"week_start": str(w), "hours": int(h), "partial": bool(p),
                 **{c: float(s[i]) for i, c in enumerate(CATEGORIES)}}
                for w, s, h, p in zip(self.weekly.week_start, self.weekly.sums, self.weekly.hours, self.weekly.partial)
            ],
        }


def disaggregate(meter: MeterSeries, weather: TemperatureSeries, config: SolverConfig | None = None) -> DisaggReport:
    """Align, build the four-category model, solve and summarize one home.

    Shares are category totals over the meter total. A home with zero total
    usage gets NaN shares and the ``zero_usage`` flag.
    """
    aligned = align_series(meter, weather)
    if len(aligned) < 2:
        raise NoOverlap("fewer than 2 usable hours after alignment")
    problem = build_energy_problem(aligned, drop_inactive=True)
    res = separate(problem, config)
    Y = np.zeros((len(aligned), len(CATEGORIES)))
    fitted = np.zeros_like(Y)
    theta = {"cooling": np.zeros(len(COOLING_CENTERS)), "heating": np.zeros(len(HEATING_CENTERS))}
    cols = [CATEGORIES.index(n) for n in problem.names]
    Y[:, cols] = res.Y_hat
    fitted[:, cols] = res.fitted(problem)
    theta.update(zip(problem.names, (np.asarray(t) for t in res.theta_hat)))
    total = float(aligned.kwh.sum())
    flags = []
    if total > 0:
        shares = {c: float(Y[:, i].sum() / total) for i, c in enumerate(CATEGORIES)}
    else:
        shares = {c: float("nan") for c in CATEGORIES}
        flags.append("zero_usage")
    if not res.converged:
        flags.append("not_converged")
    if aligned.gaps["dropped"]:
        flags.append("gaps_dropped")
    diagnostics = {
        "objective": res.objective,
        "iterations": res.iterations,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "converged": res.converged,
        "max_sum_violation": float(np.max(np.abs(Y.sum(axis=1) - aligned.kwh))),
    }
    return DisaggReport(
        timestamps=aligned.timestamps,
        meter=aligned.kwh,
        components=Y,
        fitted=fitted,
        theta={c: theta[c] for c in CATEGORIES},
        shares=shares,
        weekly=weekly_aggregate(Y, aligned.timestamps),
        diagnostics=diagnostics,
        gaps=aligned.gaps,
        flags=flags,
    )


def _batch_job(args):
    name, meter, weather, config = args
    return name, disaggregate(meter, weather, config)


def disaggregate_batch(homes: dict, config: SolverConfig | None = None, map_fn=map) -> dict:
    """Disaggregate many homes; results are keyed and ordered by home name."""
    jobs = [(name, *homes[name], config) for name in sorted(homes)]
    return dict(map_fn(_batch_job, jobs))


def batch_weekly(reports: dict) -> list:
    """Weekly category totals summed over homes, as tidy rows."""
    acc = {}
    for rep in reports.values():
        for w, s in zip(rep.weekly.week_start, rep.weekly.sums):
            key = str(w)
            acc[key] = acc.get(key, np.zeros(len(CATEGORIES))) + s
    rows = []
    for key in sorted(acc):
        for i, c in enumerate(CATEGORIES):
            rows.append({"week_start": key, "category": c, "kwh": float(acc[key][i])})
    return rows


def write_report(report: DisaggReport, out_dir) -> None:
    """Write ``components.csv`` and ``report.json`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "components.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *CATEGORIES, "total"])
        for t, row, tot in zip(report.timestamps, report.components, report.meter):
            w.writerow([_fmt_time(t), *(repr(float(x)) for x in row), repr(float(tot))])
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_components_csv(path):
    """Read ``components.csv`` back as ``(timestamps, T x 4 components, total)``."""
    ts, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["timestamp", *CATEGORIES, "total"]:
            raise ParseError(f"{path}: unexpected header {header}", row=1)
        for lineno, row in enumerate(reader, start=2):
            try:
                ts.append(_parse_time(row[0]))
                rows.append([float(x) for x in row[1:]])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: malformed row", row=lineno) from exc
    data = np.array(rows).reshape(-1, len(CATEGORIES) + 1)
    return np.array(ts, dtype="datetime64[s]"), data[:, :-1], data[:, -1]


def synthetic_home(seed: int, weeks: int = 12, start: str = "2010-06-07T00:00", cooling_share: float = 0.2,
                   mean_temp: float = 76.0, other_rate: float = 0.04):
    """A home generated from the four-category model with a known cooling share.

    Temperatures follow a daily cycle on top of a day-to-day random walk.
    Base load is an hour-of-day profile plus small noise, cooling is a
    nonnegative combination of the cooling RBFs scaled so cooling accounts
    for ``cooling_share`` of the total, heating uses the heating RBFs and
    "other" is a train of short rectangular pulses.

    Returns
    -------
    meter : MeterSeries
    weather : TemperatureSeries
    truth : dict
        ``components`` (T x 4), ``shares`` and the generating coefficients.
    """
    rng = make_rng(seed)
    T = weeks * 168
    ts = np.datetime64(start, "s") + np.arange(T) * HOUR
    hour = (ts.astype(np.int64) // 3600) % 24
    days = T // 24 + 1
    daily = mean_temp + np.cumsum(rng.normal(0.0, 3.0, days))
    daily = mean_temp + (daily - daily.mean()) * 0.8
    temp = np.repeat(daily, 24)[:T] + 10.0 * np.sin(2 * np.pi * (hour - 9) / 24) + rng.normal(0.0, 1.0, T)
    temp = np.clip(temp, TEMP_RANGE[0] + 1, TEMP_RANGE[1] - 1)

    profile = 0.35 + 0.15 * np.sin(2 * np.pi * (np.arange(24) - 6) / 24) ** 2 + 0.25 * (
        (np.arange(24) >= 17) & (np.arange(24) <= 22)
    )
    base = np.maximum(profile[hour] + rng.normal(0.0, 0.02, T), 0.0)

    Xc = rbf_features(temp, "above", COOLING_THRESHOLD)
    theta_c = np.linspace(0.2, 1.0, Xc.shape[1]) * rng.uniform(0.8, 1.2, Xc.shape[1])
    Xh = rbf_features(temp, "below", HEATING_THRESHOLD)
    theta_h = np.linspace(1.0, 0.2, Xh.shape[1])
    heat = Xh @ theta_h

    other = np.zeros(T)
    t = 0
    while t < T:
        t += int(rng.geometric(other_rate))
        if t >= T:
            break
        dur = int(rng.integers(1, 5))
        other[t:t + dur] += rng.uniform(0.2, 0.8)
        t += dur

    raw_cool = Xc @ theta_c
    rest = base.sum() + heat.sum() + other.sum()
    if raw_cool.sum() > 0 and cooling_share > 0:
        scale = cooling_share * rest / ((1.0 - cooling_share) * raw_cool.sum())
    else:
        scale = 0.0
    cool = raw_cool * scale
    comps = np.column_stack([base, cool, heat, other])
    total = comps.sum(axis=1)
    truth = {
        "components": comps,
        "shares": {c: float(comps[:, i].sum() / total.sum()) for i, c in enumerate(CATEGORIES)},
        "theta_cooling": theta_c * scale,
        "theta_heating": theta_h,
    }
    return MeterSeries(ts, total), TemperatureSeries(ts, temp), truth
