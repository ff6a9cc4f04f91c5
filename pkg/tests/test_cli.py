import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from vam_intent.cli import bundled_scenario, main
from vam_intent.gnss import DEFAULT_ORIGIN, LocalProjection, write_trace, GnssTraceRecord


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_simulate_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--duration", "20", "--out", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["gaps_ellipse.csv", "gaps_etsi.csv", "ipg_vs_distance.csv",
                     "messages_ellipse.csv", "messages_etsi.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    sizes = {r["bytes"] for r in read_csv(a / "messages_ellipse.csv")}
    assert sizes == {"41"}
    comp = read_csv(a / "ipg_vs_distance.csv")
    assert len(comp) == 20
    gaps = read_csv(a / "gaps_etsi.csv")
    assert {"ipg_mean", "ipg_median", "igg_mean", "lf_ipg_mean"} <= {r["metric"] for r in gaps}


def test_simulate_polygon_and_overrides(tmp_path):
    rc = main(["simulate", "--duration", "10", "--scheme", "polygon:6", "--seed", "3",
               "--set", "channel.data_rate=6e6", "--out", str(tmp_path)])
    assert rc == 0
    assert {r["bytes"] for r in read_csv(tmp_path / "messages_polygon6.csv")} == {str(21 + 1 + 24)}


def test_simulate_invalid_scenario(tmp_path, capsys):
    data = json.loads(bundled_scenario().read_text())
    data["duration"] = -5
    data["channel"]["d50"] = 0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "duration" in err and "channel.d50" in err


def test_simulate_bad_scheme_and_override(tmp_path, capsys):
    assert main(["simulate", "--scheme", "hull", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--set", "nonsense", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_replay(tmp_path):
    proj = LocalProjection(*DEFAULT_ORIGIN)
    t = np.arange(40) * 0.1
    trace = tmp_path / "trace.csv"
    write_trace(trace, [GnssTraceRecord(ti, *proj.to_wgs84(3 * ti, 0)) for ti in t])
    out = tmp_path / "replay.csv"
    assert main(["replay", "--trace", str(trace), "--out", str(out), "--horizon-points", "8"]) == 0
    rows = read_csv(out)
    assert len(rows) == 38
    assert "orientation_deg" in rows[0]


def test_replay_rejects_bad_trace(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    trace.write_text("0,56,12\n0,56,12\n1,56,12\n")
    assert main(["replay", "--trace", str(trace), "--out", str(tmp_path / "r.csv")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_complexity_small_grid(tmp_path):
    rc = main(["complexity", "--out", str(tmp_path), "--n-grid-is", "4,8,16,32",
               "--n-grid-id", "4,8,16,32", "--t-grid", "5,10,20,40"])
    assert rc == 0
    rows = read_csv(tmp_path / "complexity_exponents.csv")
    assert len(rows) == 6
    assert {(r["mode"], r["form"]) for r in rows} == {
        (m, f) for m in ("IS", "ID") for f in ("vector", "ellipse", "polygon")
    }
    cell = next(r for r in rows if r["mode"] == "IS" and r["form"] == "vector")
    assert float(cell["checks_t_exp"]) == pytest.approx(2.0, abs=0.05)
    assert len(read_csv(tmp_path / "complexity_counts.csv")) == 6 * 8


def test_complexity_bad_grid(tmp_path):
    assert main(["complexity", "--out", str(tmp_path), "--n-grid-is", "2,3"]) == 2


def test_codec_emit_verify_and_corruption(tmp_path, capsys):
    golden = tmp_path / "golden"
    assert main(["codec", "emit", "--golden", str(golden)]) == 0
    assert main(["codec", "verify", "--golden", str(golden)]) == 0
    assert "ellipse: ok (41 bytes)" in capsys.readouterr().out
    p = golden / "ellipse.hex"
    data = bytearray(bytes.fromhex("".join(p.read_text().split())))
    data[30] ^= 0xFF
    p.write_text(data.hex())
    assert main(["codec", "verify", "--golden", str(golden)]) == 1
    assert "ellipse: FAIL first difference at offset 30" in capsys.readouterr().out


def test_codec_verify_missing_file(tmp_path):
    assert main(["codec", "verify", "--golden", str(tmp_path)]) == 1


def test_codec_verify_bundled():
    assert main(["codec", "verify"]) == 0


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("vam-intent")
    cmd = [exe] if exe else [sys.executable, "-m", "vam_intent"]
    r = subprocess.run(cmd + ["codec", "verify"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "path: ok (527 bytes)" in r.stdout
