"""Intention-sharing and intention-detection rounds with operation counting.

In an intention-sharing (IS) round every station fits its own history once,
broadcasts the chosen representation, and each unordered pair is checked
once. In an intention-detection (ID) round every station receives all raw
histories, fits all of them, and checks every pair itself. Both modes compute
the same geometry; they differ in who does the work, which the counters
record.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .codec import payload_size
from .geometry import ellipse_overlap, sat_overlap, trajectories_collide
from .prediction import (
    DEFAULT_DT,
    DEFAULT_HISTORY,
    MotionHistory,
    PredictionError,
    fit_quadratic,
    predict,
    to_ellipse,
    to_polygon,
)

MODES = ("IS", "ID")
FORMS = ("vector", "ellipse", "polygon")

DEFAULT_N_GRID = {"IS": (16, 32, 64, 128), "ID": (8, 16, 32, 64)}
DEFAULT_T_GRID = (5, 10, 20, 40)
DEFAULT_V = 8

_CHECK_COUNTER = {"vector": "segment_tests", "ellipse": "ellipse_tests", "polygon": "sat_axis_tests"}


class CoordinationError(ValueError):
    pass


@dataclass(frozen=True)
class Form:
    kind: str
    T: int = 40
    V: int = DEFAULT_V
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.kind not in FORMS:
            raise CoordinationError(f"unknown form {self.kind!r}")

    @property
    def payload(self) -> int:
        if self.kind == "vector":
            return payload_size("vector", self.T)
        if self.kind == "polygon":
            return payload_size("polygon", self.V)
        return payload_size("ellipse")

    def label(self) -> str:
        return {"vector": f"vector(T={self.T})", "ellipse": "ellipse", "polygon": f"polygon(V={self.V})"}[self.kind]


@dataclass
class RoundInput:
    histories: list[MotionHistory]
    form: Form
    mode: str = "IS"

    def __post_init__(self):
        if len(self.histories) < 2:
            raise CoordinationError(f"a round needs at least 2 stations, got {len(self.histories)}")
        if self.mode not in MODES:
            raise CoordinationError(f"unknown mode {self.mode!r}")


@dataclass
class RoundReport:
    collisions: np.ndarray
    op_counters: Counter = field(default_factory=Counter)
    bytes_on_air: int = 0

    @property
    def checks(self) -> int:
        return sum(self.op_counters[k] for k in _CHECK_COUNTER.values())


def _represent(h: MotionHistory, form: Form, counter: Counter):
    counter["fits"] += 1
    pt = predict(fit_quadratic(h), form.dt, form.T)
    if form.kind == "vector":
        return pt.polyline()
    if form.kind == "ellipse":
        return to_ellipse(pt)
    return to_polygon(pt, form.V)


def _collide(a, b, form: Form, counter: Counter) -> bool:
    if form.kind == "vector":
        return trajectories_collide(a, b, counter)
    if form.kind == "ellipse":
        return ellipse_overlap(a, b, counter=counter)
    return sat_overlap(a, b, counter=counter)


def _represent_all(histories, form, counter) -> list:
    reps = []
    for h in histories:
        try:
            reps.append(_represent(h, form, counter))
        except PredictionError:
            reps.append(None)
    return reps


def _check_all(reps: list, form: Form, counter: Counter) -> np.ndarray:
    n = len(reps)
    out = np.zeros((n, n), dtype=bool)
    for i in range(n):
        if reps[i] is None:
            continue
        for j in range(i + 1, n):
            if reps[j] is None:
                continue
            out[i, j] = out[j, i] = _collide(reps[i], reps[j], form, counter)
    return out


def run_is_round(inp: RoundInput) -> RoundReport:
    counter: Counter = Counter()
    reps = _represent_all(inp.histories, inp.form, counter)
    sent = sum(r is not None for r in reps)
    matrix = _check_all(reps, inp.form, counter)
    return RoundReport(matrix, counter, sent * inp.form.payload)


def run_id_round(inp: RoundInput) -> RoundReport:
    counter: Counter = Counter()
    shared = [h.tail(DEFAULT_HISTORY) for h in inp.histories]
    views = []
    for _ in range(len(shared)):
        reps = _represent_all(shared, inp.form, counter)
        views.append(_check_all(reps, inp.form, counter))
    for v in views[1:]:
        if not np.array_equal(v, views[0]):
            raise CoordinationError("stations disagree on the collision matrix")
    nbytes = sum(len(h) for h in shared) * 8
    return RoundReport(views[0], counter, nbytes)


def run_round(inp: RoundInput) -> RoundReport:
    return run_is_round(inp) if inp.mode == "IS" else run_id_round(inp)


# -- scaling harness ---------------------------------------------------------


def synthetic_histories(n: int, seed: int = 0, H: int = DEFAULT_HISTORY, rate_hz: float = 10.0,
                        extent: float = 200.0) -> list[MotionHistory]:
    """``n`` noisy curved tracks scattered over a square of side ``extent``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3, n)))
    t = np.arange(H) / rate_hz
    out = []
    for _ in range(n):
        p0 = rng.uniform(-extent / 2, extent / 2, 2)
        v = rng.uniform(-6, 6, 2)
        a = rng.uniform(-0.5, 0.5, 2)
        xy = p0 + np.outer(t, v) + 0.5 * np.outer(t * t, a) + rng.normal(0, 0.2, (H, 2))
        out.append(MotionHistory.from_arrays(t, xy, capacity=H))
    return out


def fit_cost(form: Form, H: int = DEFAULT_HISTORY) -> int:
    """Primitive-operation cost assigned to one fit + predict: H samples accumulated, T points evaluated."""
    return H + form.T


@dataclass(frozen=True)
class GridPoint:
    mode: str
    form: str
    N: int
    T: int
    fits: int
    checks: int
    primitive_ops: int
    bytes_on_air: int


@dataclass(frozen=True)
class Exponent:
    value: float
    stderr: float


@dataclass
class ScalingResult:
    mode: str
    form: str
    points: list[GridPoint]
    n_exponents: dict[str, Exponent]
    t_exponents: dict[str, Exponent]


def _slope(x: Sequence[float], y: Sequence[float]) -> Exponent:
    x = np.log(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return Exponent(math.nan, math.nan)
    r = stats.linregress(x, np.log(y))
    return Exponent(float(r.slope), float(r.stderr))


def _check_grid(grid: Sequence[int], name: str) -> list[int]:
    g = sorted(int(v) for v in grid)
    if len(g) < 4 or len(set(g)) != len(g):
        raise CoordinationError(f"{name} grid needs at least 4 distinct values, got {list(grid)}")
    ratios = [b / a for a, b in zip(g, g[1:])]
    if g[0] < 1 or max(ratios) / min(ratios) > 1.5:
        raise CoordinationError(f"{name} grid must be roughly geometric, got {g}")
    return g


def measure_point(mode: str, form: Form, N: int, seed: int = 0) -> GridPoint:
    hs = synthetic_histories(N, seed)
    rep = run_round(RoundInput(hs, form, mode))
    fits = rep.op_counters["fits"]
    checks = rep.op_counters[_CHECK_COUNTER[form.kind]]
    return GridPoint(mode, form.kind, N, form.T, fits, checks,
                     fits * fit_cost(form) + checks, rep.bytes_on_air)


def measure_scaling(
    form: str,
    mode: str,
    n_grid: Optional[Sequence[int]] = None,
    t_grid: Optional[Sequence[int]] = None,
    V: int = DEFAULT_V,
    seed: int = 0,
) -> ScalingResult:
    """Operation-count exponents in N (at the smallest T) and in T (at the smallest N).

    Exponents are least-squares slopes of log count against log N or log T.
    """
    if mode not in MODES:
        raise CoordinationError(f"unknown mode {mode!r}")
    n_grid = _check_grid(n_grid or DEFAULT_N_GRID[mode], "N")
    t_grid = _check_grid(t_grid or DEFAULT_T_GRID, "T")
    if n_grid[0] < 2:
        raise CoordinationError("N grid values must be >= 2")
    if t_grid[-1] > 40:
        raise CoordinationError("T grid values must be <= 40")
    dt = min(DEFAULT_DT, 10.0 / t_grid[-1])
    n_pts = [measure_point(mode, Form(form, t_grid[0], V, dt), n, seed) for n in n_grid]
    t_pts = [measure_point(mode, Form(form, t, V, dt), n_grid[0], seed) for t in t_grid]
    metrics = ("fits", "checks", "primitive_ops")
    n_exp = {m: _slope(n_grid, [getattr(p, m) for p in n_pts]) for m in metrics}
    t_exp = {m: _slope(t_grid, [getattr(p, m) for p in t_pts]) for m in metrics}
    return ScalingResult(mode, form, n_pts + t_pts, n_exp, t_exp)


def write_harness_csv(path: str | Path, results: Sequence[ScalingResult]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mode", "form", "N", "T", "fits", "checks", "primitive_ops", "bytes_on_air"])
        for r in results:
            for p in r.points:
                w.writerow([p.mode, p.form, p.N, p.T, p.fits, p.checks, p.primitive_ops, p.bytes_on_air])


def write_exponents_csv(path: str | Path, results: Sequence[ScalingResult]) -> None:
    cols = ["mode", "form"]
    for axis in ("n", "t"):
        for m in ("fits", "checks", "primitive_ops"):
            cols += [f"{m}_{axis}_exp", f"{m}_{axis}_stderr"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in results:
            row = [r.mode, r.form]
            for exps in (r.n_exponents, r.t_exponents):
                for m in ("fits", "checks", "primitive_ops"):
                    e = exps[m]
                    row += [f"{e.value:.4f}", f"{e.stderr:.4f}"]
            w.writerow(row)
