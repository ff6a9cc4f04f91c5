"""Per-station VAM generation: trigger rules and container scheduling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from . import codec
from .codec import (
    BasicHfContainer,
    EllipseContainer,
    PathContainer,
    PolygonContainer,
    VamHeader,
    VamMessage,
)
from .geometry import Point2
from .gnss import DEFAULT_ORIGIN, LocalProjection
from .prediction import (
    DEFAULT_DT,
    DEFAULT_HISTORY,
    DEFAULT_T,
    MotionHistory,
    PredictionError,
    fit_quadratic,
    predict,
    to_ellipse,
    to_polygon,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 3
# absorbs float drift in clock and distance comparisons (10 Hz ticks)
_EPS = 1e-9

SCHEME_ETSI = "etsi"
SCHEME_ELLIPSE = "ellipse"
SCHEME_POLYGON = "polygon"

STATION_TYPES = {"pedestrian": codec.STATION_PEDESTRIAN, "cyclist": codec.STATION_CYCLIST}


class RulesError(ValueError):
    pass


def parse_scheme(text: str) -> tuple[str, int]:
    """``"etsi"``, ``"ellipse"`` or ``"polygon:V"`` -> (scheme, V)."""
    name, _, arg = text.strip().lower().partition(":")
    if name in ("etsi", "etsipath", "etsi-path"):
        return SCHEME_ETSI, 0
    if name in ("ellipse", "shape-ellipse"):
        return SCHEME_ELLIPSE, 0
    if name in ("polygon", "shape-polygon"):
        try:
            v = int(arg) if arg else 8
        except ValueError:
            raise RulesError(f"bad polygon vertex count in scheme {text!r}") from None
        if not 3 <= v <= 255:
            raise RulesError(f"polygon vertex count must be 3..255, got {v}")
        return SCHEME_POLYGON, v
    raise RulesError(f"unknown scheme {text!r} (expected etsi, ellipse or polygon:V)")


@dataclass
class GenerationRules:
    t_gen_min: float = 0.1
    t_gen_max: float = 5.0
    d_pos: float = 4.0
    d_speed: float = 0.5
    d_heading: float = 4.0
    lf_period: float = 2.0
    scheme: str = SCHEME_ETSI
    polygon_vertices: int = 8
    history: int = DEFAULT_HISTORY
    dt: float = DEFAULT_DT
    horizon_points: int = DEFAULT_T

    def __post_init__(self):
        if ":" in self.scheme or self.scheme not in (SCHEME_ETSI, SCHEME_ELLIPSE, SCHEME_POLYGON):
            name, v = parse_scheme(self.scheme)
            self.scheme = name
            if name == SCHEME_POLYGON:
                self.polygon_vertices = v
        self.validate()

    def validate(self) -> None:
        if not 0 < self.t_gen_min <= self.t_gen_max:
            raise RulesError(f"need 0 < t_gen_min <= t_gen_max, got {self.t_gen_min}, {self.t_gen_max}")
        for name in ("d_pos", "d_speed", "d_heading", "lf_period", "dt"):
            if not getattr(self, name) > 0:
                raise RulesError(f"{name} must be positive, got {getattr(self, name)}")
        if not 3 <= self.history <= codec.MAX_PAST_POINTS:
            raise RulesError(f"history must be 3..{codec.MAX_PAST_POINTS}, got {self.history}")
        if not 1 <= self.horizon_points <= codec.MAX_PREDICTED_POINTS:
            raise RulesError(f"horizon_points must be 1..40, got {self.horizon_points}")
        if not 3 <= self.polygon_vertices <= 255:
            raise RulesError(f"polygon_vertices must be 3..255, got {self.polygon_vertices}")


@dataclass
class StationState:
    id: int
    kind: str
    clock: float = 0.0
    history: MotionHistory = field(default_factory=MotionHistory)
    last_tx_time: Optional[float] = None
    last_tx_pos: Optional[Point2] = None
    last_tx_speed: float = 0.0
    last_tx_heading: float = 0.0
    last_lf_time: Optional[float] = None
    heading: float = 0.0

    def observe(self, t: float, pos) -> None:
        """Advance the clock and record a position fix."""
        self.clock = float(t)
        self.history.append(t, pos)
        self._update_heading()

    def _update_heading(self) -> None:
        if len(self.history) < 2:
            return
        a, b = self.history[-2].pos, self.history[-1].pos
        dx, dy = b.x - a.x, b.y - a.y
        if math.hypot(dx, dy) > 1e-6:
            self.heading = math.degrees(math.atan2(dx, dy)) % 360.0

    @property
    def speed(self) -> float:
        if len(self.history) < 2:
            return 0.0
        a, b = self.history[-2], self.history[-1]
        return math.hypot(b.pos.x - a.pos.x, b.pos.y - a.pos.y) / (b.t - a.t)

    @property
    def position(self) -> Point2:
        return self.history[-1].pos


def new_station(id: int, kind: str, rules: GenerationRules) -> StationState:
    if kind not in STATION_TYPES:
        raise RulesError(f"unknown station kind {kind!r}")
    return StationState(id=id, kind=kind, history=MotionHistory(capacity=rules.history))


def _heading_delta(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def should_generate(s: StationState, rules: GenerationRules) -> bool:
    if s.last_tx_time is None:
        return True
    elapsed = s.clock - s.last_tx_time
    if elapsed + _EPS < rules.t_gen_min:
        return False
    if elapsed + _EPS >= rules.t_gen_max:
        return True
    pos = s.position
    if math.hypot(pos.x - s.last_tx_pos.x, pos.y - s.last_tx_pos.y) + _EPS >= rules.d_pos:
        return True
    if abs(s.speed - s.last_tx_speed) + _EPS >= rules.d_speed:
        return True
    return _heading_delta(s.heading, s.last_tx_heading) + _EPS >= rules.d_heading


def _shape_container(s: StationState, rules: GenerationRules, ref: Point2):
    pt = predict(fit_quadratic(s.history), rules.dt, rules.horizon_points)
    if rules.scheme == SCHEME_ELLIPSE:
        e = to_ellipse(pt)
        return EllipseContainer.from_values(
            e.center.x - ref.x, e.center.y - ref.y, e.cov.sxx, e.cov.sxy, e.cov.syy
        )
    poly = to_polygon(pt, rules.polygon_vertices)
    c = PolygonContainer.from_offsets((v.x - ref.x, v.y - ref.y) for v in poly)
    limit = codec.POLY_OFFSET_LIMIT_CM
    if any(abs(d) > limit for v in c.vertices for d in v):
        raise PredictionError("predicted polygon exceeds the container offset range")
    return c


def _path_container(s: StationState, rules: GenerationRules, ref: Point2):
    past = [(p.pos.x - ref.x, p.pos.y - ref.y) for p in s.history.samples[-codec.MAX_PAST_POINTS:]]
    pt = predict(fit_quadratic(s.history), rules.dt, rules.horizon_points)
    pred = [(p.x - ref.x, p.y - ref.y) for p in pt.positions]
    return (PathContainer.from_offsets(past), PathContainer.from_offsets(pred))


def build_vam(
    s: StationState,
    rules: GenerationRules,
    projection: LocalProjection = LocalProjection(*DEFAULT_ORIGIN),
) -> VamMessage:
    """Assemble the next message for ``s`` and record it as transmitted."""
    ref = s.position
    lat, lon = projection.to_wgs84(ref.x, ref.y)
    speed = s.speed
    header = VamHeader(PROTOCOL_VERSION, s.id, int(round(s.clock * 1000.0)) % 65536)
    basic = BasicHfContainer(
        STATION_TYPES[s.kind],
        int(round(lat * 1e7)),
        int(round(lon * 1e7)),
        int(round(s.heading * 10.0)) % 3600,
        min(int(round(speed * 100.0)), 65534),
    )
    container = None
    lf = False
    try:
        if rules.scheme == SCHEME_ETSI:
            if s.last_lf_time is None or s.clock - s.last_lf_time + _EPS >= rules.lf_period:
                container = _path_container(s, rules, ref)
                lf = True
        else:
            container = _shape_container(s, rules, ref)
    except PredictionError as exc:
        log.debug("station %s at %.2f s: HF-only message (%s)", s.id, s.clock, exc)
        container = None
        lf = False
    s.last_tx_time = s.clock
    s.last_tx_pos = ref
    s.last_tx_speed = speed
    s.last_tx_heading = s.heading
    if lf:
        s.last_lf_time = s.clock
    return VamMessage(header, basic, container)


def step(
    s: StationState,
    t: float,
    pos,
    rules: GenerationRules,
    projection: LocalProjection = LocalProjection(*DEFAULT_ORIGIN),
) -> Optional[VamMessage]:
    """Record a fix and return a message if the trigger rules fire."""
    s.observe(t, pos)
    if should_generate(s, rules):
        return build_vam(s, rules, projection)
    return None
