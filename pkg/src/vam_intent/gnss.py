"""GNSS trace parsing and the local equirectangular projection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .prediction import (
    DEFAULT_DT,
    DEFAULT_HISTORY,
    DEFAULT_T,
    MotionHistory,
    fit_quadratic,
    predict,
    to_ellipse,
)

EARTH_RADIUS_M = 6_371_008.8
DAY_S = 86_400.0

# Halmstad, used when a scenario gives no geographic anchor
DEFAULT_ORIGIN = (56.6634, 12.8782)


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class GnssTraceRecord:
    t: float
    lat: float
    lon: float


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular east/north metres about ``(lat0, lon0)``."""

    lat0: float
    lon0: float

    @property
    def _k(self) -> float:
        return math.cos(math.radians(self.lat0))

    def to_enu(self, lat: float, lon: float) -> tuple[float, float]:
        x = EARTH_RADIUS_M * math.radians(lon - self.lon0) * self._k
        y = EARTH_RADIUS_M * math.radians(lat - self.lat0)
        return x, y

    def to_wgs84(self, x: float, y: float) -> tuple[float, float]:
        lat = self.lat0 + math.degrees(y / EARTH_RADIUS_M)
        lon = self.lon0 + math.degrees(x / (EARTH_RADIUS_M * self._k))
        return lat, lon


def _check_record(t: float, lat: float, lon: float, where: str) -> None:
    if not all(map(math.isfinite, (t, lat, lon))):
        raise TraceError(f"{where}: non-finite value")
    if abs(lat) > 90:
        raise TraceError(f"{where}: latitude {lat} out of range")
    if abs(lon) > 180:
        raise TraceError(f"{where}: longitude {lon} out of range")


def monotonicize(records: Sequence[tuple[int, float, float, float]]) -> list[GnssTraceRecord]:
    """Unwrap UTC midnight rollovers, then require strictly increasing time.

    ``records`` are ``(line_number, t, lat, lon)``.
    """
    out: list[GnssTraceRecord] = []
    offset = 0.0
    prev_raw = None
    for line, t, lat, lon in records:
        _check_record(t, lat, lon, f"line {line}")
        if prev_raw is not None and t < prev_raw - DAY_S / 2:
            offset += DAY_S
        prev_raw = t
        ta = t + offset
        if out and ta <= out[-1].t:
            raise TraceError(f"line {line}: timestamp {t} does not increase (previous {out[-1].t - offset})")
        out.append(GnssTraceRecord(ta, lat, lon))
    return out


def read_trace(path: str | Path) -> list[GnssTraceRecord]:
    """Read a ``t,lat,lon`` CSV; a header row is optional."""
    rows = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() in ("t", "time"):
                continue
            if len(row) != 3:
                raise TraceError(f"line {lineno}: expected 3 columns t,lat,lon, got {len(row)}")
            try:
                t, lat, lon = (float(c) for c in row)
            except ValueError:
                raise TraceError(f"line {lineno}: non-numeric field in {row!r}") from None
            rows.append((lineno, t, lat, lon))
    return monotonicize(rows)


def write_trace(path: str | Path, records: Iterable[GnssTraceRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "lat", "lon"])
        for r in records:
            w.writerow([repr(float(r.t)), repr(float(r.lat)), repr(float(r.lon))])


def replay_rows(
    records: Sequence[GnssTraceRecord],
    history: int = DEFAULT_HISTORY,
    dt: float = DEFAULT_DT,
    horizon_points: int = DEFAULT_T,
) -> tuple[list[str], list[list[float]]]:
    """Slide a history window over the trace and predict at every fix.

    Returns the CSV header and one row per fix once the window holds 3 samples.
    """
    if len(records) < 3:
        raise TraceError(f"replay needs at least 3 fixes, got {len(records)}")
    proj = LocalProjection(records[0].lat, records[0].lon)
    header = ["t", "x", "y", "ax", "bx", "cx", "ay", "by", "cy", "sigma_x", "sigma_y",
              "center_x", "center_y", "semi_major", "semi_minor", "orientation_deg"]
    for k in range(1, horizon_points + 1):
        header += [f"px{k}", f"py{k}"]
    h = MotionHistory(capacity=history)
    rows = []
    for r in records:
        x, y = proj.to_enu(r.lat, r.lon)
        h.append(r.t, (x, y))
        if len(h) < 3:
            continue
        f = fit_quadratic(h)
        pt = predict(f, dt, horizon_points)
        e = to_ellipse(pt)
        a, b, ang = e.semi_axes()
        row = [r.t, x, y, f.ax, f.bx, f.cx, f.ay, f.by, f.cy, f.sigma_x, f.sigma_y,
               e.center.x, e.center.y, a, b, math.degrees(ang)]
        for p in pt.positions:
            row += [p.x, p.y]
        rows.append(row)
    return header, rows


def write_replay(path: str | Path, header: list[str], rows: list[list[float]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6f}" for v in row])
