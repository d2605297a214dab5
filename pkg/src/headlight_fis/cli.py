"""``headlight-fis`` command line.

Data goes to stdout (or ``--out``); diagnostics go to stderr as one line.
Exit codes: 0 success, 1 failed check or I/O / runtime error, 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, photometry
from .controller import (
    ANCHOR_POINTS,
    ANCHOR_TOLERANCE,
    ControllerConfig,
    anchor_residuals,
    as_super_user,
    calibrate,
    check_config,
    control,
    control_many,
    default_config,
    default_template,
    lamp_voltage,
)
from .encounter_sim import (
    EncounterScenario,
    OncomingVehicle,
    SensorModel,
    detect_pulses,
    generate_traffic_stream,
    read_pgm,
    read_trace_csv,
    render_scene_brightness,
    simulate_encounter,
    trace_column,
    write_pgm,
    write_trace_csv,
)
from .errors import CalibrationError, ConfigurationError, DomainError, HeadlightError, ParseError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    return repr(float(x))


def parse_range(text: str) -> np.ndarray:
    """``a:b:n`` -> ``n`` evenly spaced points from ``a`` to ``b`` inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range {text!r} must look like a:b:n")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"range {text!r} must look like a:b:n with numeric a, b and integer n") from None
    if n < 2:
        raise UsageError(f"range {text!r} needs n >= 2")
    return np.linspace(a, b, n)


def _load_config(path):
    if path is None:
        return default_config()
    try:
        return ControllerConfig.load(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from exc


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ commands


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    ip = args.ip
    if ip < 0:
        _warn(f"--ip {ip:g} is below zero; clamped to 0")
        ip = 0.0
    op = control(ip, as_super_user(args.su), config)
    print(f"op_lux={_fmt(op)} lamp_volts={_fmt(lamp_voltage(op, config.lamp))}")
    return EXIT_OK


def cmd_surface(args) -> int:
    config = _load_config(args.config)
    ips = parse_range(args.ip_range)
    sus = parse_range(args.su_range)
    if ips.min() < 0:
        raise UsageError("--ip-range must be non-negative")
    for su in sus:
        as_super_user(su)
    grid = np.column_stack([control_many(ips, su, config) for su in sus])
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ip", "su", "op"))
        for i, ip in enumerate(ips):
            for j, su in enumerate(sus):
                w.writerow((_fmt(ip), _fmt(su), _fmt(grid[i, j])))
    return EXIT_OK


def _summary(trace, scenario):
    ip = trace_column(trace, "ip_a_raw")
    t = trace_column(trace, "t")
    pulses = detect_pulses(t, ip, scenario.sensor)
    min_r = min(s.r for s in trace)
    max_bsgf = max(max(s.bsgf_a, s.bsgf_b) for s in trace)
    return f"samples={len(trace)} pulses={len(pulses)} min_r={_fmt(min_r)} max_bsgf={_fmt(max_bsgf)}"


def cmd_simulate(args) -> int:
    try:
        scenario = EncounterScenario.load(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario {args.scenario}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAIL
    trace = simulate_encounter(scenario)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_trace_csv(trace, fh)
    print(_summary(trace, scenario))
    return EXIT_OK


def _read_series(path, column):
    """Times and intensities from a trace CSV or a two-column ``t,lux`` stream CSV."""
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0].strip()
    if first == "t,lux":
        t, lux = [], []
        for lineno, line in enumerate(text.splitlines()[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected 2 fields, got {len(parts)}")
            try:
                t.append(float(parts[0]))
                lux.append(float(parts[1]))
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
        return np.array(t), np.array(lux)
    trace = read_trace_csv(io.StringIO(text))
    return trace_column(trace, "t"), trace_column(trace, column)


def cmd_pulses(args) -> int:
    t, lux = _read_series(args.trace, args.column)
    pulses = detect_pulses(t, lux, args.threshold)
    rng = photometry.detection_range(args.threshold, args.source)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("start", "peak", "crossover", "width", "peak_lux", "est_speed", "est_min_distance"))
    for p in pulses:
        w.writerow((
            _fmt(p.start), _fmt(p.peak_time), _fmt(p.crossover), _fmt(p.width), _fmt(p.peak_intensity),
            _fmt(photometry.estimate_relative_speed(p, rng)),
            _fmt(photometry.estimate_distance(p.peak_intensity, args.source)),
        ))
    return EXIT_OK


def cmd_stream(args) -> int:
    try:
        doc = json.loads(Path(args.vehicles).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{args.vehicles}: invalid JSON: {exc}") from exc
    try:
        vehicles = [OncomingVehicle(**v) for v in doc.get("vehicles", [])]
        sensor = SensorModel(**doc.get("sensor", {}))
    except TypeError as exc:
        raise ConfigurationError(f"{args.vehicles}: {exc}") from exc
    series = generate_traffic_stream(
        vehicles, sensor,
        ego_speed=float(doc.get("ego_speed", 0.0)),
        dt=float(doc.get("dt", 0.05)),
        duration=doc.get("duration"),
        seed=int(doc.get("seed", 0)),
    )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "lux"))
        for ti, li in zip(series.t, series.lux):
            w.writerow((_fmt(ti), _fmt(li)))
    pulses = detect_pulses(series.t, series.lux, sensor)
    print(f"samples={series.t.size} pulses={len(pulses)}")
    return EXIT_OK


def cmd_render(args) -> int:
    config = _load_config(args.config)
    su = as_super_user(args.su)
    image = read_pgm(args.image)
    ip = max(args.ip, 0.0)
    op = control(ip, su, config)
    reference = control(config.comfort.i_pc, su, config)
    out = render_scene_brightness(image, op, config, reference=reference)
    write_pgm(args.out, out)
    print(f"op_lux={_fmt(op)} scale={_fmt(op / reference)} mean_in={_fmt(image.mean())} mean_out={_fmt(out.mean())}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAIL
    config = ControllerConfig.from_json(text)
    checks = check_config(config)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name}" + (f"  [{c.detail}]" if c.detail else ""))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_calibrate(args) -> int:
    if args.template:
        template = _load_config(args.template)
    else:
        # shape-aware descent needs a near-feasible seed; the shipped config is one
        template = default_config() if args.shape else default_template()
    config = calibrate(ANCHOR_POINTS, template, tolerance=args.tolerance, shape=args.shape)
    config.save(args.out)
    checks = check_config(config)
    residuals = ",".join(_fmt(r) for r in anchor_residuals(config))
    failed = [c.name for c in checks if not c.passed]
    print(f"residuals={residuals} checks_passed={len(checks) - len(failed)}/{len(checks)}")
    for name in failed:
        _warn(f"check failed: {name}")
    return EXIT_FAIL if failed else EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="headlight-fis", description="Fuzzy headlight-intensity controller tools.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("infer", help="commanded O_p and lamp voltage for one reading")
    s.add_argument("--ip", type=float, required=True, help="incoming illuminance, lux")
    s.add_argument("--su", type=float, default=1.0, help="super-user factor in [0.5, 1.5]")
    s.add_argument("--config")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("surface", help="O_p over an (I_p, super-user) grid as CSV")
    s.add_argument("--ip-range", default="0:10:101", help="a:b:n, inclusive")
    s.add_argument("--su-range", default="0.5:1.5:3", help="a:b:n, inclusive")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("simulate", help="run an encounter scenario, write its trace CSV")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pulses", help="detect intensity pulses in a trace or stream CSV")
    s.add_argument("--trace", required=True)
    s.add_argument("--column", default="ip_a_raw", help="trace column to analyse")
    s.add_argument("--threshold", type=float, default=SensorModel().detection_threshold)
    s.add_argument("--source", type=float, default=2.0e4, help="assumed oncoming source intensity, cd")
    s.set_defaults(func=cmd_pulses)

    s = sub.add_parser("stream", help="synthesize a multi-vehicle intensity stream CSV")
    s.add_argument("--vehicles", required=True, help="JSON with a 'vehicles' list")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stream)

    s = sub.add_parser("render", help="scale a P5 PGM scene by the commanded output")
    s.add_argument("--image", required=True)
    s.add_argument("--ip", type=float, required=True)
    s.add_argument("--su", type=float, default=1.0)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("validate", help="check every controller-config invariant")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("calibrate", help="fit a config to the rule-view anchors")
    s.add_argument("--template")
    s.add_argument("--tolerance", type=float, default=ANCHOR_TOLERANCE, help="max relative anchor error")
    s.add_argument("--shape", action="store_true", help="also enforce the rule-surface properties")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, DomainError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, HeadlightError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAIL


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
