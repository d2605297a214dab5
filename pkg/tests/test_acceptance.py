"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run ``python3 tests/test_acceptance.py`` for just the ten summary lines, or
``pytest tests/test_acceptance.py -s`` to see them alongside pytest output.
"""

import contextlib
import io
import math
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from headlight_fis import data_path
from headlight_fis.cli import main as cli_main
from headlight_fis.controller import ANCHOR_POINTS, control, control_many, default_config
from headlight_fis.encounter_sim import (
    EncounterScenario,
    detect_pulses,
    simulate_encounter,
    trace_column,
)
from headlight_fis.fuzzy_core import AggregatedSet, Gaussian, Trapezoid, Universe, defuzzify_centroid
from headlight_fis.photometry import (
    GlareGeometry,
    blind_spot_generating_factor,
    comfort_output_intensity,
    detection_range,
    estimate_distance,
    estimate_relative_speed,
)

O_PC = 3.4 * 46.0**2
SCENARIOS = data_path("scenarios")


def report(n, title, passed, detail):
    line = f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    capman = getattr(report, "capman", None)
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line)
    else:
        print(line)
    return passed


@pytest.fixture(autouse=True)
def _uncaptured(request):
    report.capman = request.config.pluginmanager.getplugin("capturemanager")
    yield
    report.capman = None


def criterion_1():
    cfg = default_config()
    errs = [(control(i, 1.0, cfg) - o) / o for i, o in ANCHOR_POINTS]
    ok = all(abs(e) <= 0.10 for e in errs)
    return report(1, "anchor reproduction", ok, ", ".join(f"I_p={i:g} {e:+.2%}" for (i, _), e in zip(ANCHOR_POINTS, errs)))


def criterion_2():
    got = comfort_output_intensity(3.4, 46)
    ok = got == pytest.approx(7194.4, rel=1e-12, abs=0) and abs(got - 7200) / 7200 < 0.001
    return report(2, "comfort-zone arithmetic", ok, f"O_pC={got!r}, vs 7200 {abs(got - 7200) / 7200:.3%}")


def criterion_3():
    cfg = default_config()
    grid = np.round(np.arange(1.0, 8.0 + 1e-9, 0.1), 10)
    o = control_many(grid, 1.0, cfg)
    argmin = grid[int(np.argmin(o))]
    k = int(np.flatnonzero(grid == 3.4)[0])
    low, high = o[: k + 1][::2], o[k:][::2]  # 0.2 lx steps
    mono = bool(np.all(low[1:] <= low[:-1] * 1.01) and np.all(high[1:] >= high[:-1] * 0.99))
    ok = abs(argmin - 3.4) <= 0.2 + 1e-9 and mono
    return report(3, "surface minimum", ok, f"argmin={argmin:g} lx, monotone either side={mono}")


def criterion_4():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        ip, r, phi = rng.uniform(0.01, 50), rng.uniform(1, 500), rng.uniform(0, 1.5)
        lam = rng.uniform(0.1, 10)
        base = blind_spot_generating_factor(ip, GlareGeometry(r, phi))
        scaled_i = blind_spot_generating_factor(lam * ip, GlareGeometry(r, phi))
        scaled_r = blind_spot_generating_factor(ip, GlareGeometry(lam * r, phi))
        on_axis = blind_spot_generating_factor(ip, GlareGeometry(r, 0.0))
        worst = max(
            worst,
            abs(scaled_i / base - lam) / lam,
            abs(scaled_r / base - lam**-2) / lam**-2,
            abs(base / on_axis - math.cos(phi)) / math.cos(phi),
        )
    return report(4, "BSGF scaling laws", worst <= 1e-12, f"worst relative error {worst:.2e} over 1000 draws")


def criterion_5():
    products, speed_errs = [], []
    for v in (10, 20, 40):
        sc = EncounterScenario.load(SCENARIOS / f"standalone_closing_{v}.json")
        tr = simulate_encounter(sc)
        (p,) = detect_pulses(trace_column(tr, "t"), trace_column(tr, "ip_a_raw"), sc.sensor)
        products.append(p.width * v)
        rng = detection_range(sc.sensor.detection_threshold, sc.uncontrolled_beam)
        speed_errs.append(abs(estimate_relative_speed(p, rng) - v) / v)
    spread = max(abs(x - np.mean(products)) / np.mean(products) for x in products)
    ok = spread <= 0.05 and max(speed_errs) <= 0.10
    return report(5, "pulse-width law", ok, f"width*speed spread {spread:.2%}, worst speed error {max(speed_errs):.2%}")


def criterion_6():
    sc = EncounterScenario.load(SCENARIOS / "standalone_default.json")
    tr = simulate_encounter(sc)
    errs = [abs(estimate_distance(s.ip_a_raw, sc.uncontrolled_beam) - s.r) / s.r
            for s in tr if s.phi < math.radians(5)]
    ok = len(errs) > 100 and max(errs) <= 0.02
    return report(6, "distance estimator", ok, f"{len(errs)} samples with phi<5deg, worst error {max(errs):.3%}")


def criterion_7():
    cfg = default_config()
    eps = 0.01 * cfg.output_universe.span
    worst = -math.inf
    for ip in (2.0, 2.5, 3.0, 4.0, 5.0):
        lo, mid, hi = (control(ip, su, cfg) for su in (0.5, 1.0, 1.5))
        worst = max(worst, mid - lo, hi - mid)
    fixed = [control(3.4, su, cfg) for su in (0.5, 1.0, 1.5)]
    spread = (max(fixed) - min(fixed)) / fixed[1]
    ok = worst <= eps and spread <= 0.01
    return report(7, "super-user ordering", ok, f"worst increase {worst:+.1f} lx (slack {eps:g}), O_p(3.4) spread {spread:.3%}")


def criterion_8():
    rng = np.random.default_rng(8)
    u = Universe(0.0, 2.0e4, 1001)
    fine = np.linspace(u.min, u.max, 10 * (u.resolution - 1) + 1)
    worst = 0.0
    for _ in range(100):
        terms = []
        for _ in range(rng.integers(1, 5)):
            if rng.random() < 0.6:
                mf = Gaussian(rng.uniform(0, 2e4), rng.uniform(300, 4000))
            else:
                a, b, c, d = np.sort(rng.uniform(0, 2e4, 4))
                mf = Trapezoid(a, b, c, d)
            terms.append((rng.uniform(0.05, 1.0), mf))

        def agg(x):
            return np.max([np.minimum(w, mf(x)) for w, mf in terms], axis=0)

        got = defuzzify_centroid(AggregatedSet(u.grid, agg(u.grid), {}))
        mu = agg(fine)
        ref = integrate.trapezoid(fine * mu, fine) / integrate.trapezoid(mu, fine)
        worst = max(worst, abs(got - ref) / u.span)
    return report(8, "centroid oracle", worst <= 0.005, f"worst deviation {worst:.4%} of span over 100 sets")


def criterion_9():
    mismatched, count = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        jobs = [("simulate", "--scenario", p) for p in sorted(SCENARIOS.glob("*.json"))]
        jobs += [("stream", "--vehicles", p) for p in sorted(data_path("streams").glob("*.json"))]
        for cmd, flag, path in jobs:
            outs = []
            for k in range(2):
                out = tmp / f"{path.stem}.{k}.csv"
                with contextlib.redirect_stdout(io.StringIO()):
                    code = cli_main([cmd, flag, str(path), "--out", str(out)])
                if code != 0:
                    mismatched.append(path.name)
                outs.append(out.read_bytes() if out.exists() else None)
            count += 1
            if outs[0] is None or outs[0] != outs[1]:
                mismatched.append(path.name)
    ok = count > 0 and not mismatched
    return report(9, "determinism", ok, f"{count} shipped scenarios, mismatches: {sorted(set(mismatched)) or 'none'}")


def criterion_10():
    sc = EncounterScenario.load(SCENARIOS / "closed_loop_symmetric.json")
    tr = simulate_encounter(sc)
    ops = np.array([[s.op_a, s.op_b] for s in tr])
    in_universe = bool(np.all((ops >= 0) & (ops <= 2.0e4)))
    band = [(s.op_a, s.op_b) for s in tr if 3.0 <= s.ip_a_filt <= 3.8 and 3.0 <= s.ip_b_filt <= 3.8]
    dev = max((abs(o - O_PC) / O_PC for pair in band for o in pair), default=math.inf)
    ok = in_universe and len(band) > 0 and dev <= 0.15
    return report(10, "closed-loop sanity", ok, f"in universe={in_universe}, {len(band)} band samples, worst {dev:.2%} from O_pC")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(criterion):
    assert criterion()


if __name__ == "__main__":
    sys.exit(0 if all([c() for c in CRITERIA]) else 1)
