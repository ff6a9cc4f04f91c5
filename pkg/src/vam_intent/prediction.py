"""Quadratic least-squares motion fit and the three predicted-path encodings.

The functional API (``fit_quadratic``, ``predict``, ``to_ellipse``,
``to_polygon``) is what the message engine and coordination rounds use. The
estimator classes at the bottom wrap it in the scikit-learn protocol so the
fit can sit inside pipelines and grid searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .geometry import CHI2_95_2DOF, ConvexPolygon, Cov2, Point2, UncertaintyEllipse

DEFAULT_HISTORY = 23
DEFAULT_DT = 0.25
DEFAULT_T = 40
MAX_T = 40
MAX_HORIZON = 10.0
MAX_SPAN = 60.0
SIGMA_FLOOR = 0.1
_HORIZON_EPS = 1e-9


class PredictionError(ValueError):
    pass


class UnderdeterminedFitError(PredictionError):
    pass


class HorizonExceededError(PredictionError):
    pass


@dataclass(frozen=True)
class MotionSample:
    t: float
    pos: Point2


class MotionHistory:
    """Bounded, time-ordered window of past positions for one road user."""

    def __init__(self, samples: Iterable = (), capacity: int = DEFAULT_HISTORY):
        if capacity < 3:
            raise PredictionError(f"history capacity must be >= 3, got {capacity}")
        self.capacity = capacity
        self._samples: list[MotionSample] = []
        for s in samples:
            if isinstance(s, MotionSample):
                self.append(s.t, s.pos)
            else:
                t, x, y = s
                self.append(t, (x, y))

    @classmethod
    def from_arrays(cls, t, xy, capacity: int | None = None) -> "MotionHistory":
        t = np.asarray(t, dtype=float)
        xy = np.asarray(xy, dtype=float)
        cap = capacity if capacity is not None else max(len(t), 3)
        return cls(((ti, p[0], p[1]) for ti, p in zip(t, xy)), capacity=cap)

    def append(self, t: float, pos) -> None:
        t = float(t)
        x, y = float(pos[0]), float(pos[1])
        if not all(map(math.isfinite, (t, x, y))):
            raise PredictionError("non-finite motion sample")
        if self._samples and t <= self._samples[-1].t:
            raise PredictionError(f"timestamps must increase strictly ({t} after {self._samples[-1].t})")
        self._samples.append(MotionSample(t, Point2(x, y)))
        if len(self._samples) > self.capacity:
            del self._samples[0]
        while self._samples[-1].t - self._samples[0].t > MAX_SPAN:
            del self._samples[0]

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, i):
        return self._samples[i]

    @property
    def samples(self) -> tuple[MotionSample, ...]:
        return tuple(self._samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self._samples])

    def positions(self) -> np.ndarray:
        return np.array([s.pos for s in self._samples], dtype=float).reshape(-1, 2)

    def tail(self, n: int) -> "MotionHistory":
        return MotionHistory(self._samples[-n:], capacity=max(n, 3))

    def shifted(self, dx: float, dy: float) -> "MotionHistory":
        return MotionHistory(
            ((s.t, s.pos.x + dx, s.pos.y + dy) for s in self._samples), capacity=self.capacity
        )


@dataclass(frozen=True)
class QuadraticFit:
    """Per-axis ``p(tau) = a*tau**2 + b*tau + c`` with ``tau = t - t0``."""

    ax: float
    bx: float
    cx: float
    ay: float
    by: float
    cy: float
    sigma_x: float
    sigma_y: float
    t0: float

    def position(self, tau: float) -> Point2:
        return Point2(
            (self.ax * tau + self.bx) * tau + self.cx,
            (self.ay * tau + self.by) * tau + self.cy,
        )


@dataclass(frozen=True)
class PredictedTrajectory:
    points: tuple[tuple[float, Point2], ...]
    sigma_x: float
    sigma_y: float
    t0: float
    origin: Point2

    def __post_init__(self):
        if not 1 <= len(self.points) <= MAX_T:
            raise PredictionError(f"trajectory length must be 1..{MAX_T}, got {len(self.points)}")

    @property
    def positions(self) -> list[Point2]:
        return [p for _, p in self.points]

    def polyline(self) -> list[Point2]:
        """Current position estimate followed by the predicted points."""
        return [self.origin] + self.positions


def _solve_axes(t: np.ndarray, xy: np.ndarray, t0: float) -> QuadraticFit:
    n = len(t)
    if n < 3:
        raise UnderdeterminedFitError(f"quadratic fit needs >= 3 samples, got {n}")
    tau = t - t0
    design = np.column_stack([tau * tau, tau, np.ones(n)])
    normal = design.T @ design
    # scale-aware rank check on the 3x3 normal matrix
    d = np.sqrt(np.diag(normal))
    if np.any(d == 0) or np.linalg.cond(normal / np.outer(d, d)) > 1e12:
        raise UnderdeterminedFitError("normal matrix is rank deficient (too few distinct timestamps)")
    coef = np.linalg.solve(normal, design.T @ xy)
    resid = xy - design @ coef
    ssr = np.sum(resid * resid, axis=0)
    sigma = np.sqrt(ssr / (n - 3)) if n > 3 else np.zeros(2)
    (ax, ay), (bx, by), (cx, cy) = coef
    return QuadraticFit(
        float(ax), float(bx), float(cx), float(ay), float(by), float(cy),
        float(sigma[0]), float(sigma[1]), float(t0),
    )


def fit_quadratic(h: MotionHistory) -> QuadraticFit:
    """Least-squares quadratic fit per axis, time re-centred on the newest sample."""
    t = h.times()
    if len(t) < 3:
        raise UnderdeterminedFitError(f"quadratic fit needs >= 3 samples, got {len(t)}")
    return _solve_axes(t, h.positions(), float(t[-1]))


def predict(fit: QuadraticFit, dt: float = DEFAULT_DT, T: int = DEFAULT_T) -> PredictedTrajectory:
    if not dt > 0:
        raise PredictionError(f"dt must be positive, got {dt}")
    if not 1 <= T <= MAX_T:
        raise HorizonExceededError(f"T must be in 1..{MAX_T}, got {T}")
    if dt * T > MAX_HORIZON + _HORIZON_EPS:
        raise HorizonExceededError(f"horizon {dt * T:g} s exceeds {MAX_HORIZON:g} s")
    pts = tuple((fit.t0 + k * dt, fit.position(k * dt)) for k in range(1, T + 1))
    return PredictedTrajectory(pts, fit.sigma_x, fit.sigma_y, fit.t0, fit.position(0.0))


def final_heading(pt: PredictedTrajectory) -> float:
    """Heading of the last trajectory segment, radians from east; 0 when stationary."""
    line = pt.polyline()
    a, b = line[-2], line[-1]
    dx, dy = b.x - a.x, b.y - a.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return math.atan2(dy, dx)


def to_ellipse(pt: PredictedTrajectory, sigma_floor: float = SIGMA_FLOOR) -> UncertaintyEllipse:
    """95 % ellipse at the final predicted point, major frame along the final heading."""
    s_along = max(pt.sigma_x, sigma_floor)
    s_cross = max(pt.sigma_y, sigma_floor)
    th = final_heading(pt)
    c, s = math.cos(th), math.sin(th)
    va, vc = s_along * s_along, s_cross * s_cross
    cov = Cov2(c * c * va + s * s * vc, c * s * (va - vc), s * s * va + c * c * vc)
    return UncertaintyEllipse(pt.positions[-1], cov, CHI2_95_2DOF)


def ellipse_polygon(e: UncertaintyEllipse, V: int, start_angle: float) -> ConvexPolygon:
    """Inscribe a V-gon on the ellipse boundary, parametric angles from ``start_angle``."""
    if not 3 <= V <= 255:
        raise PredictionError(f"polygon vertex count must be 3..255, got {V}")
    # express the boundary in a frame whose first axis is start_angle
    c, s = math.cos(start_angle), math.sin(start_angle)
    ixx, ixy, iyy = e.cov.inverse()
    # quadratic form in the rotated frame
    q11 = c * c * ixx + 2 * c * s * ixy + s * s * iyy
    q12 = -c * s * ixx + (c * c - s * s) * ixy + c * s * iyy
    q22 = s * s * ixx - 2 * c * s * ixy + c * c * iyy
    # Cholesky of Q: boundary points are L^-T (cos, sin) * sqrt(scale)
    l11 = math.sqrt(q11)
    l21 = q12 / l11
    l22 = math.sqrt(q22 - l21 * l21)
    r = math.sqrt(e.scale)
    verts = []
    for k in range(V):
        phi = 2.0 * math.pi * k / V
        u, w = r * math.cos(phi), r * math.sin(phi)
        # solve L^T z = (u, w)
        z2 = w / l22
        z1 = (u - l21 * z2) / l11
        verts.append((e.center.x + c * z1 - s * z2, e.center.y + s * z1 + c * z2))
    return ConvexPolygon(verts)


def to_polygon(pt: PredictedTrajectory, V: int, sigma_floor: float = SIGMA_FLOOR) -> ConvexPolygon:
    return ellipse_polygon(to_ellipse(pt, sigma_floor), V, final_heading(pt))


# -- scikit-learn style wrappers ---------------------------------------------


class QuadraticMotionModel(RegressorMixin, BaseEstimator):
    """Quadratic-in-time regressor: ``X`` is a column of timestamps, ``y`` the (x, y) positions.

    Parameters
    ----------
    dt : float
        Prediction step used by :meth:`forecast`.
    horizon_points : int
        Number of predicted points produced by :meth:`forecast`.
    """

    def __init__(self, dt: float = DEFAULT_DT, horizon_points: int = DEFAULT_T):
        self.dt = dt
        self.horizon_points = horizon_points

    def fit(self, X, y):
        X, y = validate_data(self, X, y, multi_output=True, y_numeric=True, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise ValueError(f"X must have a single time column, got {X.shape[1]}")
        y = np.asarray(y, dtype=float).reshape(len(y), -1)
        if y.shape[1] != 2:
            raise ValueError(f"y must have two position columns, got {y.shape[1]}")
        t = X[:, 0]
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        self.fit_ = _solve_axes(t, y, float(t[-1]))
        f = self.fit_
        self.coef_ = np.array([[f.ax, f.bx, f.cx], [f.ay, f.by, f.cy]])
        self.sigma_ = np.array([f.sigma_x, f.sigma_y])
        self.t0_ = f.t0
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        tau = X[:, 0] - self.t0_
        basis = np.column_stack([tau * tau, tau, np.ones_like(tau)])
        return basis @ self.coef_.T

    def forecast(self) -> PredictedTrajectory:
        check_is_fitted(self, "fit_")
        return predict(self.fit_, self.dt, self.horizon_points)


class TrajectoryEncoder(TransformerMixin, BaseEstimator):
    """Encode motion histories into fixed-width representation features.

    ``transform`` takes a sequence of :class:`MotionHistory` (or ``(t, xy)``
    pairs) and returns one row per history:

    * ``form="ellipse"``: centre x, y and covariance sxx, sxy, syy (5 values)
    * ``form="vector"``: the T predicted points flattened (2T values)
    * ``form="polygon"``: the V vertices flattened (2V values)
    """

    def __init__(self, form: str = "ellipse", dt: float = DEFAULT_DT,
                 horizon_points: int = DEFAULT_T, vertices: int = 8):
        self.form = form
        self.dt = dt
        self.horizon_points = horizon_points
        self.vertices = vertices

    def fit(self, X=None, y=None):
        if self.form not in ("ellipse", "vector", "polygon"):
            raise ValueError(f"unknown form {self.form!r}")
        predict(QuadraticFit(0, 0, 0, 0, 0, 0, 0, 0, 0), self.dt, self.horizon_points)
        self.n_features_out_ = {
            "ellipse": 5, "vector": 2 * self.horizon_points, "polygon": 2 * self.vertices
        }[self.form]
        return self

    def _encode(self, h) -> np.ndarray:
        if not isinstance(h, MotionHistory):
            t, xy = h
            h = MotionHistory.from_arrays(t, check_array(xy))
        pt = predict(fit_quadratic(h), self.dt, self.horizon_points)
        if self.form == "ellipse":
            e = to_ellipse(pt)
            return np.array([e.center.x, e.center.y, e.cov.sxx, e.cov.sxy, e.cov.syy])
        if self.form == "vector":
            return np.asarray(pt.positions, dtype=float).ravel()
        return np.asarray(to_polygon(pt, self.vertices).vertices, dtype=float).ravel()

    def transform(self, X: Sequence) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        if len(X) == 0:
            return np.empty((0, self.n_features_out_))
        return np.vstack([self._encode(h) for h in X])
