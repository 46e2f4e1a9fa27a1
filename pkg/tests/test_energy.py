import json
import math

import numpy as np
import pytest

from ctxsep import energy
from ctxsep.energy import (
    CATEGORIES,
    MeterSeries,
    TemperatureSeries,
    align_series,
    build_energy_problem,
    disaggregate,
    disaggregate_batch,
    load_components_csv,
    load_meter_csv,
    load_weather_csv,
    synthetic_home,
    weekly_aggregate,
    write_report,
)
from ctxsep.errors import NegativeUsage, NonMonotoneTimestamps, NoOverlap, ParseError
from ctxsep.linops import Diff, Identity, SmoothingBand


def hours(start, n):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")


def write(path, text):
    path.write_text(text)
    return str(path)


# ------------------------------------------------------------ loading

def test_load_two_rows(tmp_path):
    p = write(tmp_path / "m.csv", "timestamp,kwh\n2020-01-01T00:00,1.5\n2020-01-01T01:00,0.25\n")
    m = load_meter_csv(p)
    assert len(m) == 2 and m.kwh.tolist() == [1.5, 0.25]
    w = load_weather_csv(write(tmp_path / "w.csv", "timestamp,temp_f\n2020-01-01 00:00:00,41.0\n"))
    assert w.temp_f.tolist() == [41.0]


def test_load_errors(tmp_path):
    with pytest.raises(NonMonotoneTimestamps):
        load_meter_csv(write(tmp_path / "a.csv", "timestamp,kwh\n2020-01-01T00:00,1\n2020-01-01T00:00,2\n"))
    with pytest.raises(NegativeUsage):
        load_meter_csv(write(tmp_path / "b.csv", "timestamp,kwh\n2020-01-01T00:00,-0.1\n"))
    with pytest.raises(ParseError) as info:
        load_meter_csv(write(tmp_path / "c.csv", "timestamp,kwh\n2020-01-01T00:00,1\n2020-01-01T01:00,abc\n"))
    assert info.value.row == 3 and info.value.column == "kwh"
    with pytest.raises(ParseError) as info:
        load_meter_csv(write(tmp_path / "d.csv", "timestamp,kwh\nyesterday,1\n"))
    assert info.value.row == 2 and info.value.column == "timestamp"
    with pytest.raises(ParseError):
        load_meter_csv(write(tmp_path / "e.csv", "time,kwh\n2020-01-01T00:00,1\n"))
    with pytest.raises(FileNotFoundError):
        load_meter_csv(str(tmp_path / "missing.csv"))
    with pytest.raises(ValueError):
        load_weather_csv(write(tmp_path / "f.csv", "timestamp,temp_f\n2020-01-01T00:00,200\n"))


def test_csv_round_trip(tmp_path):
    m, w, _ = synthetic_home(0, weeks=1)
    energy.write_meter_csv(tmp_path / "m.csv", m)
    energy.write_weather_csv(tmp_path / "w.csv", w)
    m2, w2 = load_meter_csv(tmp_path / "m.csv"), load_weather_csv(tmp_path / "w.csv")
    assert np.array_equal(m.timestamps, m2.timestamps) and np.array_equal(m.kwh, m2.kwh)
    assert np.array_equal(w.temp_f, w2.temp_f)


# ------------------------------------------------------------ alignment

def test_align_identical_grids():
    ts = hours("2020-01-01T00:00", 10)
    a = align_series(MeterSeries(ts, np.arange(10.0)), TemperatureSeries(ts, np.full(10, 60.0)))
    assert np.array_equal(a.timestamps, ts) and np.array_equal(a.kwh, np.arange(10.0))
    assert a.gaps["dropped"] == [] and a.gaps["interpolated"] == []


def test_align_interpolates_short_gap():
    ts = hours("2020-01-01T00:00", 6)
    keep = [0, 1, 4, 5]
    w = TemperatureSeries(ts[keep], [58.0, 60.0, 70.0, 71.0])
    a = align_series(MeterSeries(ts, np.ones(6)), w)
    assert len(a) == 6
    assert np.allclose(a.temp_f[2:4], [63.333333333333, 66.666666666667])
    assert a.gaps["interpolated"][0]["hours"] == 2


def test_align_drops_long_gap():
    ts = hours("2020-01-01T00:00", 10)
    keep = [0, 1, 7, 8, 9]
    a = align_series(MeterSeries(ts, np.ones(10)), TemperatureSeries(ts[keep], [60.0] * 5))
    assert len(a) == 5
    (d,) = a.gaps["dropped"]
    assert d["hours"] == 5 and d["reason"] == "temperature gap"
    assert d["start"] == "2020-01-01T02:00:00"


def test_align_drops_meter_gap_and_trims_to_overlap():
    ts = hours("2020-01-01T00:00", 10)
    m = MeterSeries(ts[[2, 3, 5, 6, 7, 8, 9]], np.ones(7))
    a = align_series(m, TemperatureSeries(ts[:9], np.full(9, 60.0)))
    assert a.timestamps[0] == ts[2] and a.timestamps[-1] == ts[8]
    assert [d["reason"] for d in a.gaps["dropped"]] == ["meter gap"]


def test_align_no_overlap():
    with pytest.raises(NoOverlap):
        align_series(MeterSeries(hours("2020-01-01T00:00", 3), np.ones(3)),
                     TemperatureSeries(hours("2020-02-01T00:00", 3), np.ones(3) * 50))


# ------------------------------------------------------------ model

def test_energy_problem_structure():
    ts = hours("2020-07-01T00:00", 48)
    aligned = align_series(MeterSeries(ts, np.ones(48)), TemperatureSeries(ts, 60 + 30 * np.sin(np.arange(48) / 3)))
    p = build_energy_problem(aligned)
    assert p.k == 4 and p.names == list(CATEGORIES)
    base, cool, heat, other = p.specs
    assert (base.loss_norm.value, base.reg_norm.value, base.reg_weight) == ("l1", "sq_l2", 1.0)
    assert cool.loss_operator == SmoothingBand(2) and heat.loss_operator == SmoothingBand(2)
    assert [s.reg_weight for s in p.specs] == [1.0, 0.1, 0.1, 0.05]
    assert all(s.reg_operator == Diff() for s in p.specs)
    assert other.loss_operator == Identity() and p.blocks[3].n == 0
    assert all(s.nonneg for s in p.specs)


def test_mild_weather_zeroes_weather_features():
    ts = hours("2020-05-01T00:00", 24)
    aligned = align_series(MeterSeries(ts, np.ones(24)), TemperatureSeries(ts, np.linspace(50, 70, 24)))
    p = build_energy_problem(aligned)
    assert np.all(p.blocks[1].matrix == 0) and np.all(p.blocks[2].matrix == 0)
    assert build_energy_problem(aligned, drop_inactive=True).names == ["base", "other"]


# ------------------------------------------------------------ weekly

def test_weekly_one_week():
    ts = hours("2020-06-01T00:00", 168)  # a Monday
    w = weekly_aggregate(np.ones(168), ts)
    assert w.sums.tolist() == [168.0] and not w.partial[0]
    assert str(w.week_start[0]) == "2020-06-01"


def test_weekly_two_weeks_and_an_hour():
    ts = hours("2020-06-01T00:00", 337)
    w = weekly_aggregate(np.ones(337), ts)
    assert w.sums.tolist() == [168.0, 168.0, 1.0]
    assert w.partial.tolist() == [False, False, True]


def test_weekly_conserves_mass(rng):
    ts = hours("2021-03-03T05:00", 1000)
    x = rng.random((1000, 4))
    w = weekly_aggregate(x, ts)
    assert np.allclose(w.sums.sum(axis=0), x.sum(axis=0), rtol=1e-14)
    assert all(np.datetime64(d, "D").astype(int) % 7 == 4 for d in w.week_start)  # Mondays


# ------------------------------------------------------------ end to end

@pytest.fixture(scope="module")
def home_report():
    meter, weather, truth = synthetic_home(11, weeks=4)
    return meter, truth, disaggregate(meter, weather)


def test_synthetic_home_share_recovered(home_report):
    meter, truth, rep = home_report
    assert truth["shares"]["cooling"] == pytest.approx(0.2)
    assert abs(rep.shares["cooling"] - 0.2) <= 0.05
    assert sum(rep.shares.values()) == pytest.approx(1.0, abs=1e-6)


def test_report_invariants(home_report):
    meter, _, rep = home_report
    Y = rep.components
    assert np.max(np.abs(Y.sum(axis=1) - meter.kwh)) <= 1e-6 * np.linalg.norm(meter.kwh) + 1e-8
    assert Y.min() >= -1e-8
    assert np.array_equal(rep.weekly.sums.sum(axis=0), weekly_aggregate(Y, rep.timestamps).sums.sum(axis=0))
    assert np.allclose(rep.weekly.sums.sum(axis=0), Y.sum(axis=0), rtol=1e-13)
    assert rep.diagnostics["converged"]


def test_mild_home_has_no_cooling():
    meter, weather, _ = synthetic_home(5, weeks=2, mean_temp=55.0, cooling_share=0.0)
    weather = TemperatureSeries(weather.timestamps, np.minimum(weather.temp_f, 70.0))
    rep = disaggregate(meter, weather)
    assert np.all(rep.components[:, 1] == 0.0)
    assert rep.shares["cooling"] == 0.0


def test_zero_usage_home():
    ts = hours("2020-07-01T00:00", 48)
    rep = disaggregate(MeterSeries(ts, np.zeros(48)), TemperatureSeries(ts, np.full(48, 80.0)))
    assert np.all(np.abs(rep.components) <= 1e-12)
    assert all(math.isnan(v) for v in rep.shares.values())
    assert "zero_usage" in rep.flags
    assert rep.to_dict()["shares"]["cooling"] is None


def test_report_files_round_trip(home_report, tmp_path):
    _, _, rep = home_report
    write_report(rep, tmp_path)
    ts, comps, total = load_components_csv(tmp_path / "components.csv")
    assert np.array_equal(ts, rep.timestamps)
    assert np.array_equal(comps, rep.components) and np.array_equal(total, rep.meter)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["shares"] == rep.shares
    assert set(doc) >= {"shares", "theta", "diagnostics", "gaps", "weekly"}


def test_batch_order_independent():
    homes = {}
    for s in (3, 4):
        m, w, _ = synthetic_home(s, weeks=1)
        homes[f"h{s}"] = (m, w)
    a = disaggregate_batch(homes)
    b = disaggregate_batch(dict(reversed(list(homes.items()))))
    assert list(a) == list(b) == ["h3", "h4"]
    for k in a:
        assert np.array_equal(a[k].components, b[k].components)
        assert np.array_equal(disaggregate(*homes[k]).components, a[k].components)
