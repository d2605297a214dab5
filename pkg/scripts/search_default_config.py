"""Global search for a controller config meeting the anchors and every surface property.

Coordinate descent (``headlight-fis calibrate``) hits the anchors from the
naive template but stalls on the super-user and comfort-band properties. This
script runs differential evolution over the 14 free Gaussian parameters with
the worst normalized violation as the objective, seeded from the shipped
config. A result below 1.0 satisfies everything.

    python3 scripts/search_default_config.py --maxiter 400 --out cfg.json

Needs scipy (installed with the ``test`` extra).
"""

import argparse
import sys

import numpy as np
from scipy.optimize import differential_evolution

from headlight_fis.controller import (
    ANCHOR_POINTS,
    COMFORT_CENTROID_TOLERANCE,
    ComfortZone,
    ControllerConfig,
    anchor_residuals,
    comfort_output_centroid,
    default_config,
    surface_violations,
)
from headlight_fis.errors import ConfigurationError
from headlight_fis.fuzzy_core import Gaussian

# (term side, term name, attribute) for each entry of the search vector
KEYS = (
    ("in", "VeryLow", "mean"), ("in", "Low", "mean"), ("in", "High", "mean"), ("in", "VeryHigh", "mean"),
    ("in", "VeryLow", "sigma"), ("in", "Low", "sigma"), ("in", "Comfort", "sigma"),
    ("in", "High", "sigma"), ("in", "VeryHigh", "sigma"),
    ("out", "High", "mean"), ("out", "VeryHigh", "mean"),
    ("out", "Comfort", "sigma"), ("out", "High", "sigma"), ("out", "VeryHigh", "sigma"),
)
BOUNDS = (
    (0.0, 2.5), (1.5, 3.3), (3.5, 6.0), (5.0, 10.0),
    (0.3, 3.0), (0.3, 2.0), (0.3, 2.0), (0.3, 2.0), (0.3, 4.0),
    (8000, 18000), (10000, 20000),
    (300, 3000), (300, 5000), (300, 6000),
)
INFEASIBLE = 100.0


def to_config(x, base: ControllerConfig) -> ControllerConfig:
    ins, outs = base.input_term_map, base.output_term_map
    for (side, name, attr), v in zip(KEYS, x):
        terms = ins if side == "in" else outs
        old = terms[name]
        terms[name] = Gaussian(float(v) if attr == "mean" else old.mean, float(v) if attr == "sigma" else old.sigma)
    ins["Comfort"] = Gaussian(base.comfort.i_pc, ins["Comfort"].sigma)
    outs["Comfort"] = Gaussian(ComfortZone().o_pc, outs["Comfort"].sigma)
    return ControllerConfig(comfort=base.comfort, input_terms=ins, output_terms=outs, rules=base.rules,
                            lamp=base.lamp, anchors=ANCHOR_POINTS)


def to_vector(config: ControllerConfig) -> list[float]:
    maps = {"in": config.input_term_map, "out": config.output_term_map}
    return [getattr(maps[s][n], a) for s, n, a in KEYS]


def objective(x, base: ControllerConfig) -> float:
    m_vl, m_l, m_h, m_vh = x[:4]
    if not (m_vl < m_l < base.comfort.i_pc < m_h < m_vh) or not x[9] + 300 < x[10]:
        return INFEASIBLE
    cfg = to_config(x, base)
    try:
        worst_anchor = max(abs(r) for r in anchor_residuals(cfg, ANCHOR_POINTS))
        violations = surface_violations(cfg)
    except ConfigurationError:
        return INFEASIBLE
    shift = abs(comfort_output_centroid(cfg) - cfg.comfort.o_pc) / cfg.comfort.o_pc
    return max(worst_anchor / cfg.anchor_tolerance, shift / COMFORT_CENTROID_TOLERANCE, *violations.values())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--maxiter", type=int, default=400)
    ap.add_argument("--popsize", type=int, default=20)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    base = default_config()
    x0 = np.clip(to_vector(base), [b[0] for b in BOUNDS], [b[1] for b in BOUNDS])
    result = differential_evolution(objective, BOUNDS, args=(base,), seed=args.seed, maxiter=args.maxiter,
                                    popsize=args.popsize, tol=0, polish=False, x0=x0)
    cfg = to_config(result.x, base)
    cfg.save(args.out)
    print(f"worst normalized violation {result.fun:.4f}")
    for name, v in surface_violations(cfg).items():
        print(f"  {name:<15} {v:.4f}")
    return 0 if result.fun <= 1.0 else 1


if __name__ == "__main__":
    sys.exit(main())
