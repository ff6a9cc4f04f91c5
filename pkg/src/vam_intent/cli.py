"""Command-line entry point: ``vam-intent {simulate,replay,complexity,codec}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import codec, coordination, gnss, netsim
from .vam_engine import RulesError, parse_scheme

log = logging.getLogger("vam_intent")

DEFAULT_SCHEMES = ("etsi", "ellipse")


def bundled_scenario() -> Path:
    return Path(str(resources.files("vam_intent") / "data" / "crossing.json"))


def bundled_golden_dir() -> Path:
    return Path(str(resources.files("vam_intent") / "data" / "golden"))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, assignments: list[str]) -> dict:
    """Apply ``section.field=value`` assignments to a scenario dictionary."""
    data = json.loads(json.dumps(data))
    for a in assignments:
        key, sep, value = a.partition("=")
        if not sep:
            raise netsim.ScenarioError([(a, "override must look like key=value")])
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(value)
    return data


def _scheme_slug(scheme: str) -> str:
    return scheme.replace(":", "")


def cmd_simulate(args) -> int:
    path = Path(args.scenario) if args.scenario else bundled_scenario()
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario {path}: {exc}", file=sys.stderr)
        return 2
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.duration is not None:
        overrides.append(f"duration={args.duration}")
    try:
        schemes = [parse_scheme(s) for s in (args.scheme or DEFAULT_SCHEMES)]
        scenario = netsim.scenario_from_dict(apply_overrides(data, overrides))
    except netsim.ScenarioError as exc:
        for field, msg in exc.errors:
            print(f"error: {field or '<scenario>'}: {msg}", file=sys.stderr)
        return 2
    except RulesError as exc:
        print(f"error: --scheme: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for name, v in schemes:
        label = f"polygon:{v}" if name == "polygon" else name
        sc = replace(scenario, rules=replace(scenario.rules, scheme=name, polygon_vertices=v or scenario.rules.polygon_vertices))
        log.info("simulating %s (%d stations, %.0f s)", label, len(sc.stations), sc.duration)
        res = netsim.run(sc)
        slug = _scheme_slug(label)
        netsim.write_log(out / f"messages_{slug}.csv", res.log)
        netsim.write_gaps(out / f"gaps_{slug}.csv", label, res.metrics)
        if name != "etsi":
            sizes = {r.bytes for r in res.log}
            if len(sizes) != 1:
                print(f"error: {label} run produced mixed message sizes {sorted(sizes)}", file=sys.stderr)
                return 1
        results[label] = res.metrics
        print(f"{label}: {len(res.transmissions)} messages, mean IGG {res.metrics.igg_mean():.3f} s")
    netsim.write_comparison(out / "ipg_vs_distance.csv", results)
    return 0


def cmd_replay(args) -> int:
    try:
        records = gnss.read_trace(args.trace)
        header, rows = gnss.replay_rows(records, args.history, args.dt, args.horizon_points)
    except (gnss.TraceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gnss.write_replay(out, header, rows)
    print(f"{len(rows)} predictions written to {out}")
    return 0


def _grid(text: str | None):
    if not text:
        return None
    return [int(v) for v in text.split(",")]


def cmd_complexity(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    try:
        for mode in coordination.MODES:
            n_grid = _grid(args.n_grid_is if mode == "IS" else args.n_grid_id)
            for form in coordination.FORMS:
                log.info("measuring %s/%s", mode, form)
                results.append(coordination.measure_scaling(
                    form, mode, n_grid, _grid(args.t_grid), V=args.vertices, seed=args.seed or 0))
    except coordination.CoordinationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    coordination.write_harness_csv(out / "complexity_counts.csv", results)
    coordination.write_exponents_csv(out / "complexity_exponents.csv", results)
    for r in results:
        n, t = r.n_exponents["checks"], r.t_exponents["checks"]
        print(f"{r.mode}/{r.form}: checks ~ N^{n.value:.3f} (+/-{n.stderr:.3f}), T^{t.value:.3f} (+/-{t.stderr:.3f}); "
              f"fits ~ N^{r.n_exponents['fits'].value:.3f}")
    return 0


def cmd_codec(args) -> int:
    golden = Path(args.golden) if args.golden else bundled_golden_dir()
    messages = codec.golden_messages()
    if args.action == "emit":
        golden.mkdir(parents=True, exist_ok=True)
        for name, m in messages.items():
            (golden / f"{name}.hex").write_text(codec.to_hex(codec.encode(m)))
        print(f"wrote {len(messages)} golden vectors to {golden}")
        return 0
    failed = 0
    for name, m in messages.items():
        path = golden / f"{name}.hex"
        try:
            stored = codec.from_hex(path.read_text())
        except (OSError, ValueError) as exc:
            print(f"{name}: FAIL cannot read {path}: {exc}")
            failed += 1
            continue
        fresh = codec.encode(m)
        off = codec.first_difference(stored, fresh)
        if off is not None:
            print(f"{name}: FAIL first difference at offset {off}")
            failed += 1
            continue
        try:
            ok = codec.decode(stored) == m
        except codec.CodecError as exc:
            print(f"{name}: FAIL decode error {exc}")
            failed += 1
            continue
        print(f"{name}: ok ({len(stored)} bytes)" if ok else f"{name}: FAIL decode mismatch")
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vam-intent", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a VAM broadcast scenario and export gap metrics")
    s.add_argument("--scenario", help="scenario JSON (default: bundled crossing.json)")
    s.add_argument("--scheme", action="append", help="etsi | ellipse | polygon:V (repeatable; default etsi and ellipse)")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float)
    s.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario field, e.g. channel.data_rate=6e6 or rules.d_pos=3")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="predict areas along a recorded t,lat,lon trace")
    r.add_argument("--trace", required=True)
    r.add_argument("--out", required=True, help="output CSV")
    r.add_argument("--history", type=int, default=23)
    r.add_argument("--dt", type=float, default=0.25)
    r.add_argument("--horizon-points", type=int, default=40)
    r.set_defaults(func=cmd_replay)

    c = sub.add_parser("complexity", help="measure operation-count exponents of IS and ID rounds")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--n-grid-is", help="comma-separated N values for IS rounds")
    c.add_argument("--n-grid-id", help="comma-separated N values for ID rounds")
    c.add_argument("--t-grid", help="comma-separated T values")
    c.add_argument("--vertices", type=int, default=coordination.DEFAULT_V)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_complexity)

    g = sub.add_parser("codec", help="emit or verify golden wire vectors")
    g.add_argument("action", choices=("emit", "verify"))
    g.add_argument("--golden", help="golden vector directory (default: bundled)")
    g.set_defaults(func=cmd_codec)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("VAM_INTENT_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
