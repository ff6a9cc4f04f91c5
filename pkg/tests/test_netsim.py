import json
import math
from statistics import mean

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vam_intent.codec import ContainerTag
from vam_intent.netsim import (
    ChannelParams,
    LogRecord,
    Scenario,
    ScenarioError,
    StationSpec,
    airtime,
    collect_gaps,
    distance_bin,
    generate,
    load_scenario,
    make_crossing_scenario,
    run,
    scenario_from_dict,
    substream,
    with_scheme,
)
from vam_intent.vam_engine import GenerationRules


def periodic_pair(duration, distance=100.0, period=1.0):
    """Two stationary stations that generate exactly every ``period`` seconds."""
    rules = GenerationRules(t_gen_max=period)
    stations = [StationSpec("pedestrian", [(0, 0)], 0.0), StationSpec("pedestrian", [(distance, 0)], 0.0)]
    return Scenario(duration=duration, stations=stations, rules=rules, seed=7)


def test_airtime_examples():
    assert airtime(41, 6e6) == pytest.approx(54.67e-6, abs=0.01e-6)
    assert airtime(527, 6e6) == pytest.approx(702.67e-6, abs=0.01e-6)
    with pytest.raises(ValueError):
        airtime(0, 6e6)


def test_load_ordering_for_equal_traffic():
    ch = ChannelParams(data_rate=2e5)
    busy_small = 20 * airtime(41, ch.data_rate)
    busy_large = 20 * airtime(527, ch.data_rate)
    assert busy_large / busy_small == pytest.approx(527 / 41)
    assert ch.p_load(busy_large) < ch.p_load(busy_small)


def test_p_dist_is_half_at_d50():
    assert ChannelParams().p_dist(350.0) == pytest.approx(0.5)


@given(st.floats(0, 2000), st.floats(0, 2000), st.floats(0, 2), st.floats(0, 2))
def test_channel_monotonicity(d1, d2, a1, a2):
    ch = ChannelParams()
    if d1 <= d2:
        assert ch.p_rx(d1, a1) >= ch.p_rx(d2, a1)
    if a1 <= a2:
        assert ch.p_rx(d1, a1) >= ch.p_rx(d1, a2)


def test_lossless_periodic_ipg_is_exactly_one():
    res = run(periodic_pair(60.0), reception=lambda d, a: 1.0)
    s = res.metrics.ipg_samples(distance_bin(100.0))
    assert len(s) == 2 * 60
    assert all(g == pytest.approx(1.0, abs=1e-9) for g in s)
    assert res.metrics.igg_mean() == pytest.approx(1.0)


def test_half_reception_gives_geometric_ipg():
    res = run(periodic_pair(1100.0), reception=lambda d, a: 0.5)
    s = res.metrics.ipg_samples(distance_bin(100.0))
    assert len(s) >= 1000
    assert mean(s) == pytest.approx(2.0, abs=0.1)


def test_conservation():
    sc = make_crossing_scenario(n_stations=6, duration=30.0, seed=3)
    res = run(sc)
    gen = {}
    rx = {}
    for r in res.log:
        if r.rx_id < 0:
            gen[r.tx_id] = gen.get(r.tx_id, 0) + 1
        elif r.delivered:
            rx[(r.tx_id, r.rx_id)] = rx.get((r.tx_id, r.rx_id), 0) + 1
    for (a, _), n in rx.items():
        assert n <= gen[a]


def test_mobility_is_scheme_independent():
    sc = make_crossing_scenario(n_stations=6, duration=30.0, seed=4)
    a = generate(with_scheme(sc, "etsi"))
    b = generate(with_scheme(sc, "ellipse"))
    assert [(x.t, x.tx, x.pos) for x in a] == [(x.t, x.tx, x.pos) for x in b]
    assert {x.nbytes for x in b} == {41}


def test_run_is_deterministic():
    sc = make_crossing_scenario(n_stations=6, duration=20.0, seed=5)
    assert run(sc).log == run(sc).log


def test_seed_changes_channel_draws():
    sc = make_crossing_scenario(n_stations=6, duration=20.0, seed=5)
    other = Scenario(**{**sc.__dict__, "seed": 6})
    assert run(sc).log != run(other).log


def test_substreams_are_independent_of_creation_order():
    a = substream(1, 2, 3, 4).random(5)
    substream(1, 2, 0, 0).random(100)
    assert (substream(1, 2, 3, 4).random(5) == a).all()
    assert not (substream(1, 2, 4, 3).random(5) == a).all()


def rec(t, delivered=1, rx=1, d=10.0, tag=0):
    return LogRecord(t, 0, rx, 41, tag, d, delivered)


def test_collect_gaps_examples():
    m = collect_gaps([rec(1), rec(2), rec(4), rec(8)])
    assert m.ipg_samples(0) == [1, 2, 4]
    m = collect_gaps([rec(1)])
    assert m.ipg_samples(0) == []


def test_collect_gaps_skips_losses_and_bins_by_later_reception():
    m = collect_gaps([rec(1), rec(2, delivered=0), rec(3, d=120.0)])
    assert m.ipg_samples(0) == []
    assert m.ipg_samples(2) == [2]


def test_collect_gaps_lf_and_generation():
    lf = int(ContainerTag.PATH)
    log = [
        LogRecord(0.0, 0, -1, 527, lf, 0.0, 1), rec(0.0, tag=lf),
        LogRecord(1.0, 0, -1, 21, 0, 0.0, 1), rec(1.0),
        LogRecord(2.0, 0, -1, 527, lf, 0.0, 1), rec(2.0, tag=lf, delivered=0),
        LogRecord(4.0, 0, -1, 527, lf, 0.0, 1), rec(4.0, tag=lf),
    ]
    m = collect_gaps(log)
    assert m.igg_samples() == [1.0, 1.0, 2.0]
    assert m.lf_igg_samples() == [2.0, 2.0]
    assert m.lf_ipg_samples(0) == [4.0]


def test_distance_bins():
    assert distance_bin(0) == 0
    assert distance_bin(49.99) == 0
    assert distance_bin(50) == 1
    assert distance_bin(499.9) == 9
    assert distance_bin(500) is None


def test_station_ping_pong():
    s = StationSpec("cyclist", [(0, 0), (10, 0)], 2.0)
    assert s.position(2.5) == (5, 0)
    assert s.position(5.0) == (10, 0)
    assert s.position(7.5) == (5, 0)
    assert StationSpec("cyclist", [(0, 0), (10, 0)], 2.0, start_offset=2.5).position(0) == (5, 0)


def test_scenario_validation_errors():
    base = make_crossing_scenario(n_stations=3, duration=10.0).to_dict()
    bad = json.loads(json.dumps(base))
    bad["duration"] = -1
    bad["tick"] = 0.5
    bad["channel"]["d50"] = 0
    bad["stations"][0]["kind"] = "car"
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(bad)
    fields = {f for f, _ in exc.value.errors}
    assert {"duration", "tick", "channel.d50", "stations[0].kind"} <= fields


def test_scenario_unknown_and_missing_fields():
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict({"stations": [], "colour": 1})
    assert ("duration", "required field missing") in exc.value.errors
    base = make_crossing_scenario(n_stations=2, duration=10.0).to_dict()
    base["channel"]["fading"] = True
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(base)
    assert exc.value.errors[0][0] == "channel.fading"


def test_scenario_needs_two_stations():
    with pytest.raises(ScenarioError):
        Scenario(duration=1.0, stations=[StationSpec("cyclist", [(0, 0)], 0.0)]).validate()


def test_scenario_dict_roundtrip(tmp_path):
    sc = make_crossing_scenario(n_stations=4, duration=12.0, seed=9)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sc.to_dict()))
    back = load_scenario(p)
    assert back.to_dict() == sc.to_dict()
    assert run(back).log == run(sc).log


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_ipg_not_below_generation_floor():
    res = run(make_crossing_scenario(n_stations=6, duration=30.0, seed=8))
    for b in range(10):
        assert all(g >= 0.1 - 1e-9 for g in res.metrics.ipg_samples(b))


def test_ellipse_run_has_fixed_message_size():
    res = run(with_scheme(make_crossing_scenario(n_stations=6, duration=30.0, seed=2), "ellipse"))
    assert {r.bytes for r in res.log} == {41}
    assert not math.isnan(res.metrics.igg_mean())
