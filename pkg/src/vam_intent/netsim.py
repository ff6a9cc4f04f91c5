"""Deterministic VAM broadcast simulation over an abstract lossy channel.

Stations follow waypoint paths at constant speed and run the generation
engine every mobility tick. Reception of each transmission is then decided
per receiver with probability ``p_dist(d) * p_load``::

    p_dist(d) = 1 / (1 + (d / d50) ** steepness)
    p_load    = exp(-airtime_others / busy_window)

where ``airtime_others`` is the airtime of other stations' transmissions
inside a ``busy_window`` centred on the transmission. Mobility never depends
on the channel, so two schemes run on the same scenario produce identical
trajectories and generation instants; reception draws come from per-link
random streams so the comparison is paired.
"""

from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import mean, median
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import codec
from .geometry import Point2
from .gnss import DEFAULT_ORIGIN, LocalProjection
from .vam_engine import GenerationRules, RulesError, new_station, step

log = logging.getLogger(__name__)

BIN_WIDTH_M = 50.0
MAX_DISTANCE_M = 500.0
N_BINS = int(MAX_DISTANCE_M // BIN_WIDTH_M)

# random stream purposes
STREAM_MOBILITY = 1
STREAM_CHANNEL = 2


class ScenarioError(ValueError):
    """Scenario validation failure; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


@dataclass
class ChannelParams:
    data_rate: float = 6e6
    d50: float = 350.0
    steepness: float = 8.0
    busy_window: float = 1.0

    def p_dist(self, d: float) -> float:
        return 1.0 / (1.0 + (d / self.d50) ** self.steepness)

    def p_load(self, airtime_others: float) -> float:
        return math.exp(-airtime_others / self.busy_window)

    def p_rx(self, d: float, airtime_others: float) -> float:
        return self.p_dist(d) * self.p_load(airtime_others)


def airtime(message_bytes: int, data_rate: float) -> float:
    if message_bytes <= 0 or data_rate <= 0:
        raise ValueError("message size and data rate must be positive")
    return 8.0 * message_bytes / data_rate


@dataclass
class StationSpec:
    kind: str
    waypoints: list[Point2]
    speed: float
    start_offset: float = 0.0

    def __post_init__(self):
        self.waypoints = [Point2(float(p[0]), float(p[1])) for p in self.waypoints]
        seg = [math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:])]
        self._cum = [0.0]
        for d in seg:
            self._cum.append(self._cum[-1] + d)

    @property
    def path_length(self) -> float:
        return self._cum[-1]

    def position(self, t: float) -> Point2:
        """Ping-pong along the waypoint path at constant speed."""
        L = self.path_length
        if L == 0.0 or self.speed == 0.0:
            return self.waypoints[0]
        s = (self.speed * (t + self.start_offset)) % (2.0 * L)
        if s > L:
            s = 2.0 * L - s
        i = min(bisect.bisect_right(self._cum, s) - 1, len(self.waypoints) - 2)
        a, b = self.waypoints[i], self.waypoints[i + 1]
        seg = self._cum[i + 1] - self._cum[i]
        f = 0.0 if seg == 0 else (s - self._cum[i]) / seg
        return Point2(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))


@dataclass
class Scenario:
    duration: float
    stations: list[StationSpec]
    tick: float = 0.1
    channel: ChannelParams = field(default_factory=ChannelParams)
    rules: GenerationRules = field(default_factory=GenerationRules)
    seed: int = 0
    origin: tuple[float, float] = DEFAULT_ORIGIN
    name: str = ""

    def validate(self) -> None:
        errors = []
        if not self.duration > 0:
            errors.append(("duration", f"must be > 0, got {self.duration}"))
        if not self.tick > 0:
            errors.append(("tick", f"must be > 0, got {self.tick}"))
        elif self.tick > self.rules.t_gen_min + 1e-12:
            errors.append(("tick", f"must be <= rules.t_gen_min ({self.rules.t_gen_min}), got {self.tick}"))
        if len(self.stations) < 2:
            errors.append(("stations", f"need at least 2 stations, got {len(self.stations)}"))
        if not 0 <= self.seed < 2**64:
            errors.append(("seed", "must be a 64-bit unsigned integer"))
        for name in ("data_rate", "d50", "steepness", "busy_window"):
            v = getattr(self.channel, name)
            if not v > 0:
                errors.append((f"channel.{name}", f"must be > 0, got {v}"))
        for i, st in enumerate(self.stations):
            if st.kind not in ("pedestrian", "cyclist"):
                errors.append((f"stations[{i}].kind", f"unknown kind {st.kind!r}"))
            if len(st.waypoints) < 1:
                errors.append((f"stations[{i}].waypoints", "need at least one waypoint"))
            if not st.speed >= 0:
                errors.append((f"stations[{i}].speed", f"must be >= 0, got {st.speed}"))
        if errors:
            raise ScenarioError(errors)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration": self.duration,
            "tick": self.tick,
            "seed": self.seed,
            "origin": list(self.origin),
            "channel": asdict(self.channel),
            "rules": asdict(self.rules),
            "stations": [
                {
                    "kind": s.kind,
                    "waypoints": [list(p) for p in s.waypoints],
                    "speed": s.speed,
                    "start_offset": s.start_offset,
                }
                for s in self.stations
            ],
        }


def _known(cls, d: dict, where: str, errors: list) -> dict:
    names = {f.name for f in fields(cls)}
    for k in d:
        if k not in names:
            errors.append((f"{where}.{k}" if where else k, "unknown field"))
    return {k: v for k, v in d.items() if k in names}


def scenario_from_dict(d: dict) -> Scenario:
    errors: list[tuple[str, str]] = []
    if not isinstance(d, dict):
        raise ScenarioError([("", "scenario must be a JSON object")])
    d = dict(d)
    d.pop("description", None)
    for req in ("duration", "stations"):
        if req not in d:
            errors.append((req, "required field missing"))
    if errors:
        raise ScenarioError(errors)
    try:
        channel = ChannelParams(**_known(ChannelParams, d.get("channel", {}), "channel", errors))
    except TypeError as exc:
        errors.append(("channel", str(exc)))
        channel = ChannelParams()
    try:
        rules = GenerationRules(**_known(GenerationRules, d.get("rules", {}), "rules", errors))
    except (TypeError, RulesError) as exc:
        errors.append(("rules", str(exc)))
        rules = GenerationRules()
    stations = []
    for i, s in enumerate(d.get("stations") or []):
        try:
            st = _known(StationSpec, s, f"stations[{i}]", errors)
            stations.append(StationSpec(**st))
        except (TypeError, ValueError, IndexError) as exc:
            errors.append((f"stations[{i}]", str(exc)))
    top = {k: v for k, v in d.items() if k not in ("channel", "rules", "stations")}
    top = _known(Scenario, top, "", errors)
    if "origin" in top:
        top["origin"] = tuple(top["origin"])
    if errors:
        raise ScenarioError(errors)
    sc = Scenario(stations=stations, channel=channel, rules=rules, **top)
    sc.validate()
    return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([("", f"invalid JSON: {exc}")]) from None
    return scenario_from_dict(data)


def substream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, *key)))


def make_crossing_scenario(
    n_stations: int = 20,
    duration: float = 300.0,
    seed: int = 2025,
    length: float = 600.0,
    channel: Optional[ChannelParams] = None,
) -> Scenario:
    """Straight pathway of ``length`` metres with a crossing at each end.

    Even-indexed stations are cyclists, odd ones pedestrians. Speeds, lanes
    and path phases come from the mobility stream of ``seed``.
    """
    rng = substream(seed, STREAM_MOBILITY, 0)
    stations = []
    for i in range(n_stations):
        kind = "cyclist" if i % 2 == 0 else "pedestrian"
        speed = round(float(rng.uniform(4.0, 6.0) if kind == "cyclist" else rng.uniform(1.2, 1.6)), 2)
        lane = round(float(rng.uniform(-2.0, 2.0)), 2)
        side = 15.0 if rng.random() < 0.5 else -15.0
        wps = [Point2(0.0, side), Point2(0.0, lane), Point2(length, lane), Point2(length, -side)]
        cycle = 2.0 * (length + abs(side - lane) + abs(-side - lane)) / speed
        offset = round(float(rng.uniform(0.0, cycle)), 1)
        stations.append(StationSpec(kind, wps, speed, offset))
    return Scenario(
        duration=duration,
        stations=stations,
        channel=channel or ChannelParams(),
        seed=seed,
        name="crossing",
    )


# -- simulation --------------------------------------------------------------


@dataclass(frozen=True)
class Transmission:
    t: float
    tx: int
    index: int
    nbytes: int
    tag: int
    pos: Point2


@dataclass(frozen=True)
class LogRecord:
    t: float
    tx_id: int
    rx_id: int
    bytes: int
    container_tag: int
    distance_m: float
    delivered: int


@dataclass
class SimResult:
    scheme: str
    log: list[LogRecord]
    metrics: "GapMetrics"
    transmissions: list[Transmission]


def generate(scenario: Scenario) -> list[Transmission]:
    """Mobility plus message generation; independent of the channel."""
    rules = scenario.rules
    proj = LocalProjection(*scenario.origin)
    states = [new_station(i, s.kind, rules) for i, s in enumerate(scenario.stations)]
    # pre-roll a full history window so the first message is not a cold start
    for k in range(rules.history - 1, 0, -1):
        t = round(-k * scenario.tick, 9)
        for spec, st in zip(scenario.stations, states):
            st.observe(t, spec.position(t))
    counts = [0] * len(states)
    out = []
    n_ticks = int(math.floor(scenario.duration / scenario.tick + 1e-9))
    for k in range(n_ticks + 1):
        t = round(k * scenario.tick, 9)
        for i, (spec, st) in enumerate(zip(scenario.stations, states)):
            pos = spec.position(t)
            m = step(st, t, pos, rules, proj)
            if m is not None:
                nbytes = len(codec.encode(m))
                out.append(Transmission(t, i, counts[i], nbytes, int(m.container_tag), pos))
                counts[i] += 1
    return out


def _busy_airtime(txs: list[Transmission], channel: ChannelParams) -> np.ndarray:
    """Airtime of other stations' transmissions within the centred busy window."""
    times = np.array([x.t for x in txs])
    air = np.array([airtime(x.nbytes, channel.data_rate) for x in txs])
    ids = np.array([x.tx for x in txs])
    half = channel.busy_window / 2.0
    cum = np.concatenate([[0.0], np.cumsum(air)])
    lo = np.searchsorted(times, times - half, side="left")
    hi = np.searchsorted(times, times + half, side="right")
    total = cum[hi] - cum[lo]
    own = np.zeros_like(total)
    for sid in np.unique(ids):
        sel = np.flatnonzero(ids == sid)
        st, sa = times[sel], air[sel]
        sc = np.concatenate([[0.0], np.cumsum(sa)])
        l = np.searchsorted(st, st - half, side="left")
        h = np.searchsorted(st, st + half, side="right")
        own[sel] = sc[h] - sc[l]
    return np.maximum(total - own, 0.0)


ReceptionModel = Callable[[float, float], float]


def run(
    scenario: Scenario,
    reception: Optional[ReceptionModel] = None,
) -> SimResult:
    """Simulate ``scenario``; ``reception(distance, airtime_others)`` overrides the channel."""
    scenario.validate()
    channel = scenario.channel
    p_rx = reception or channel.p_rx
    txs = generate(scenario)
    busy = _busy_airtime(txs, channel) if txs else np.zeros(0)
    n = len(scenario.stations)
    per_tx = [0] * n
    for x in txs:
        per_tx[x.tx] += 1
    draws = {
        (a, b): substream(scenario.seed, STREAM_CHANNEL, a, b).random(per_tx[a])
        for a in range(n)
        for b in range(n)
        if a != b
    }
    records: list[LogRecord] = []
    positions: dict[float, list[Point2]] = {}
    for x, load in zip(txs, busy):
        records.append(LogRecord(x.t, x.tx, -1, x.nbytes, x.tag, 0.0, 1))
        if x.t not in positions:
            positions[x.t] = [s.position(x.t) for s in scenario.stations]
        for rx in range(n):
            if rx == x.tx:
                continue
            rpos = positions[x.t][rx]
            d = math.dist(x.pos, rpos)
            ok = draws[(x.tx, rx)][x.index] < p_rx(d, float(load))
            records.append(LogRecord(x.t, x.tx, rx, x.nbytes, x.tag, d, int(ok)))
    scheme = scenario.rules.scheme
    if scheme == "polygon":
        scheme = f"polygon:{scenario.rules.polygon_vertices}"
    return SimResult(scheme, records, collect_gaps(records), txs)


def with_scheme(scenario: Scenario, scheme: str) -> Scenario:
    return replace(scenario, rules=replace(scenario.rules, scheme=scheme))


# -- metrics -----------------------------------------------------------------


def distance_bin(d: float) -> Optional[int]:
    if d < 0 or d >= MAX_DISTANCE_M:
        return None
    return int(d // BIN_WIDTH_M)


@dataclass
class GapMetrics:
    ipg: dict = field(default_factory=lambda: defaultdict(list))      # (tx, rx, bin) -> gaps
    lf_ipg: dict = field(default_factory=lambda: defaultdict(list))   # (tx, rx, bin) -> gaps
    igg: dict = field(default_factory=lambda: defaultdict(list))      # tx -> gaps
    lf_igg: dict = field(default_factory=lambda: defaultdict(list))   # tx -> gaps

    @staticmethod
    def _by_bin(samples: dict, b: int) -> list[float]:
        out = []
        for key in sorted(samples):
            if key[2] == b:
                out.extend(samples[key])
        return out

    def ipg_samples(self, b: int) -> list[float]:
        return self._by_bin(self.ipg, b)

    def lf_ipg_samples(self, b: int) -> list[float]:
        return self._by_bin(self.lf_ipg, b)

    def igg_samples(self) -> list[float]:
        return [g for k in sorted(self.igg) for g in self.igg[k]]

    def lf_igg_samples(self) -> list[float]:
        return [g for k in sorted(self.lf_igg) for g in self.lf_igg[k]]

    def ipg_mean(self, b: int) -> float:
        s = self.ipg_samples(b)
        return mean(s) if s else math.nan

    def lf_ipg_mean(self, b: int) -> float:
        s = self.lf_ipg_samples(b)
        return mean(s) if s else math.nan

    def igg_mean(self) -> float:
        s = self.igg_samples()
        return mean(s) if s else math.nan

    def lf_igg_mean(self) -> float:
        s = self.lf_igg_samples()
        return mean(s) if s else math.nan

    def rows(self, scheme: str) -> list[tuple]:
        """(scheme, bin_low_m, metric, value_s, n_samples); bin_low_m is -1 for per-transmitter metrics."""
        out = []
        for b in range(N_BINS):
            lo = int(b * BIN_WIDTH_M)
            s = self.ipg_samples(b)
            out.append((scheme, lo, "ipg_mean", mean(s) if s else math.nan, len(s)))
            out.append((scheme, lo, "ipg_median", median(s) if s else math.nan, len(s)))
            s = self.lf_ipg_samples(b)
            out.append((scheme, lo, "lf_ipg_mean", mean(s) if s else math.nan, len(s)))
        s = self.igg_samples()
        out.append((scheme, -1, "igg_mean", mean(s) if s else math.nan, len(s)))
        s = self.lf_igg_samples()
        out.append((scheme, -1, "lf_igg_mean", mean(s) if s else math.nan, len(s)))
        return out


def collect_gaps(log: Iterable[LogRecord]) -> GapMetrics:
    m = GapMetrics()
    last_gen: dict[int, float] = {}
    last_lf_gen: dict[int, float] = {}
    last_rx: dict[tuple[int, int], float] = {}
    last_lf_rx: dict[tuple[int, int], float] = {}
    lf_tag = int(codec.ContainerTag.PATH)
    for r in log:
        lf = r.container_tag == lf_tag
        if r.rx_id < 0:
            if r.tx_id in last_gen:
                m.igg[r.tx_id].append(r.t - last_gen[r.tx_id])
            last_gen[r.tx_id] = r.t
            if lf:
                if r.tx_id in last_lf_gen:
                    m.lf_igg[r.tx_id].append(r.t - last_lf_gen[r.tx_id])
                last_lf_gen[r.tx_id] = r.t
            continue
        if not r.delivered:
            continue
        key = (r.tx_id, r.rx_id)
        b = distance_bin(r.distance_m)
        if key in last_rx and b is not None:
            m.ipg[(r.tx_id, r.rx_id, b)].append(r.t - last_rx[key])
        last_rx[key] = r.t
        if lf:
            if key in last_lf_rx and b is not None:
                m.lf_ipg[(r.tx_id, r.rx_id, b)].append(r.t - last_lf_rx[key])
            last_lf_rx[key] = r.t
    return m


# -- CSV output --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def write_log(path: str | Path, log: Iterable[LogRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "tx_id", "rx_id", "bytes", "container_tag", "distance_m", "delivered"])
        for r in log:
            w.writerow([f"{r.t:.3f}", r.tx_id, r.rx_id, r.bytes, r.container_tag,
                        f"{r.distance_m:.3f}", r.delivered])


def write_gaps(path: str | Path, scheme: str, metrics: GapMetrics) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scheme", "bin_low_m", "metric", "value_s", "n_samples"])
        for row in metrics.rows(scheme):
            w.writerow([_fmt(v) for v in row])


def write_comparison(path: str | Path, results: dict[str, GapMetrics]) -> None:
    """Plot-ready mean IPG per distance bin and scheme, with the IGG reference."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_low_m", "scheme", "ipg_mean_s", "ipg_n", "igg_mean_s", "lf_ipg_mean_s", "lf_igg_mean_s"])
        for b in range(N_BINS):
            for scheme in sorted(results):
                m = results[scheme]
                w.writerow([
                    int(b * BIN_WIDTH_M), scheme, _fmt(m.ipg_mean(b)), len(m.ipg_samples(b)),
                    _fmt(m.igg_mean()), _fmt(m.lf_ipg_mean(b)), _fmt(m.lf_igg_mean()),
                ])
