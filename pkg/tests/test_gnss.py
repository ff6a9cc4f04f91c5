import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vam_intent.gnss import (
    DEFAULT_ORIGIN,
    GnssTraceRecord,
    LocalProjection,
    TraceError,
    monotonicize,
    read_trace,
    replay_rows,
    write_replay,
    write_trace,
)

PROJ = LocalProjection(*DEFAULT_ORIGIN)


def trace_from_xy(t, xy, proj=PROJ):
    return [GnssTraceRecord(float(ti), *proj.to_wgs84(x, y)) for ti, (x, y) in zip(t, xy)]


@settings(max_examples=300, deadline=None)
@given(st.floats(-5000, 5000), st.floats(-5000, 5000), st.floats(-70, 70), st.floats(-179, 179))
def test_projection_roundtrip_submillimetre(x, y, lat0, lon0):
    p = LocalProjection(lat0, lon0)
    if math.hypot(x, y) > 5000:
        return
    bx, by = p.to_enu(*p.to_wgs84(x, y))
    assert math.hypot(bx - x, by - y) < 1e-3


def test_projection_origin_and_axes():
    assert PROJ.to_enu(*DEFAULT_ORIGIN) == (0.0, 0.0)
    x, y = PROJ.to_enu(DEFAULT_ORIGIN[0] + 0.001, DEFAULT_ORIGIN[1])
    assert x == 0.0 and y == pytest.approx(111.195, abs=0.01)


def test_straight_line_cross_track_error():
    t = np.arange(100) * 0.1
    heading = math.radians(30)
    u = np.array([math.cos(heading), math.sin(heading)])
    xy = np.outer(3.0 * t, u)
    records = trace_from_xy(t, xy)
    header, rows = replay_rows(records, horizon_points=8)
    cx, cy = header.index("center_x"), header.index("center_y")
    proj = LocalProjection(records[0].lat, records[0].lon)
    offset = np.array(proj.to_enu(*PROJ.to_wgs84(0, 0)))
    assert len(rows) == 98
    for r in rows:
        c = np.array([r[cx], r[cy]]) - offset
        cross = c[0] * u[1] - c[1] * u[0]
        assert abs(cross) < 0.01


def arc_error(radius, speed=4.0, horizon_s=2.0):
    t = np.arange(60) * 0.1
    ang = speed * t / radius
    xy = np.c_[radius * np.sin(ang), radius * (1 - np.cos(ang))]
    records = trace_from_xy(t, xy)
    dt, T = 0.25, int(horizon_s / 0.25)
    header, rows = replay_rows(records, dt=dt, horizon_points=T)
    proj = LocalProjection(records[0].lat, records[0].lon)
    off = np.array(proj.to_enu(*PROJ.to_wgs84(0, 0)))
    px, py = header.index(f"px{T}"), header.index(f"py{T}")
    errs = []
    for r in rows[25:]:
        tf = r[0] + horizon_s
        a = speed * tf / radius
        truth = np.array([radius * math.sin(a), radius * (1 - math.cos(a))]) + off
        errs.append(math.hypot(r[px] - truth[0], r[py] - truth[1]))
    return float(np.mean(errs))


def test_arc_prediction_error_grows_with_curvature():
    errs = [arc_error(r) for r in (200.0, 50.0, 20.0, 10.0)]
    assert all(a < b for a, b in zip(errs, errs[1:]))
    assert errs[0] < 0.05


def test_replay_header_and_row_width():
    t = np.arange(10) * 0.1
    header, rows = replay_rows(trace_from_xy(t, np.c_[t, t]), horizon_points=4)
    assert header[:3] == ["t", "x", "y"]
    assert header[-2:] == ["px4", "py4"]
    assert all(len(r) == len(header) for r in rows)
    assert len(rows) == 8


def test_replay_needs_three_fixes():
    with pytest.raises(TraceError):
        replay_rows(trace_from_xy([0, 1], [(0, 0), (1, 1)]))


def test_read_trace_with_header(tmp_path):
    p = tmp_path / "trace.csv"
    t = np.arange(5) * 0.2
    write_trace(p, trace_from_xy(t, np.c_[t, t]))
    recs = read_trace(p)
    assert [r.t for r in recs] == pytest.approx(t.tolist())


def test_duplicate_timestamp_reports_line(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("t,lat,lon\n0.0,56.0,12.0\n0.1,56.0,12.0\n0.1,56.0,12.00001\n")
    with pytest.raises(TraceError, match="line 4"):
        read_trace(p)


@pytest.mark.parametrize(
    "body, line",
    [
        ("0,56,12\n1,abc,12\n", "line 2"),
        ("0,56,12\n1,56\n", "line 2"),
        ("0,56,12\n1,95,12\n", "line 2"),
        ("0,56,12\n1,56,12\n2,56,200\n", "line 3"),
    ],
)
def test_malformed_rows(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(TraceError, match=line):
        read_trace(p)


def test_midnight_rollover_unwrapped():
    recs = monotonicize([(1, 86399.5, 56, 12), (2, 86399.9, 56, 12), (3, 0.3, 56, 12)])
    assert [r.t for r in recs] == pytest.approx([86399.5, 86399.9, 86400.3])


def test_write_replay_format(tmp_path):
    t = np.arange(6) * 0.1
    header, rows = replay_rows(trace_from_xy(t, np.c_[t, 2 * t]), horizon_points=2)
    p = tmp_path / "out.csv"
    write_replay(p, header, rows)
    with open(p) as f:
        got = list(csv.reader(f))
    assert got[0] == header
    assert len(got) == len(rows) + 1
    assert all(len(c.split(".")[1]) == 6 for c in got[1])
