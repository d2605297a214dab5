"""Headlight intensity controller built on the Mamdani engine.

The controller reads the incoming illuminance ``I_p`` from a forward-facing
sensor and commands an outgoing lamp level ``O_p`` (lux at reference
geometry). A driver-selected super-user factor in [0.5, 1.5] scales the
widths of the input terms: 0.5 narrows them (more sensitive), 1.5 widens them.

Rule base::

    I_p VeryLow  -> O_p VeryHigh      oncoming vehicle far away
    I_p Low      -> O_p High
    I_p Comfort  -> O_p Comfort       held at the comfort output
    I_p High     -> O_p High          overcome cabin illumination
    I_p VeryHigh -> O_p VeryHigh
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import photometry
from .errors import CalibrationError, ConfigurationError, DomainError
from .fuzzy_core import (
    FuzzyRule,
    FuzzyRuleBase,
    Gaussian,
    LinguisticVariable,
    MembershipFunction,
    Trapezoid,
    Universe,
    infer,
    infer_many,
)

INPUT_NAME = "I_p"
OUTPUT_NAME = "O_p"
SU_MIN, SU_MAX = 0.5, 1.5

INPUT_TERMS = ("VeryLow", "Low", "Comfort", "High", "VeryHigh")
OUTPUT_TERMS = ("Low", "Comfort", "High", "VeryHigh")
DEFAULT_RULES = (
    ("VeryLow", "VeryHigh"),
    ("Low", "High"),
    ("Comfort", "Comfort"),
    ("High", "High"),
    ("VeryHigh", "VeryHigh"),
)

#: Rule-view readings (I_p lx, O_p lx) the shipped config is calibrated to.
ANCHOR_POINTS = ((2.0, 1.01e4), (3.2, 7.37e3), (5.0, 1.41e4))
ANCHOR_TOLERANCE = 0.10
COMFORT_CENTROID_TOLERANCE = 0.01
#: Anchors within this many lux of I_pC count as "at comfort" for calibration.
NEAR_COMFORT = 0.5


@dataclass(frozen=True)
class ComfortZone:
    i_pc_low: float = 1.0
    i_pc: float = photometry.COMFORT_INPUT_LUX
    blind_spot_distance: float = photometry.BLIND_SPOT_DISTANCE_M
    critical_band: tuple[float, float] = (30.0, 60.0)
    glare_angle_threshold_deg: float = 45.0

    def __post_init__(self):
        object.__setattr__(self, "critical_band", tuple(float(v) for v in self.critical_band))
        vals = (self.i_pc_low, self.i_pc, self.blind_spot_distance, *self.critical_band,
                self.glare_angle_threshold_deg)
        if not all(v > 0 for v in vals):
            raise ConfigurationError("comfort zone constants must all be positive")
        if not self.critical_band[0] < self.critical_band[1]:
            raise ConfigurationError("critical band must satisfy min < max")

    @property
    def o_pc(self) -> float:
        return photometry.comfort_output_intensity(self.i_pc, self.blind_spot_distance)


@dataclass(frozen=True)
class SuperUser:
    """Driver sensitivity: 0.5 poor visibility, 1.0 normal, 1.5 good visibility."""

    factor: float = 1.0

    def __post_init__(self):
        if not SU_MIN <= self.factor <= SU_MAX:
            raise DomainError(f"super-user factor must lie in [{SU_MIN}, {SU_MAX}], got {self.factor}")


def as_super_user(su) -> SuperUser:
    return su if isinstance(su, SuperUser) else SuperUser(float(su))


@dataclass(frozen=True)
class LampSpec:
    v_max: float = 12.0
    o_max: float = 2.0e4
    gamma: float = 3.4

    def __post_init__(self):
        if not (self.v_max > 0 and self.o_max > 0 and self.gamma > 0):
            raise ConfigurationError("lamp v_max, o_max and gamma must be positive")


@dataclass(frozen=True)
class ControllerConfig:
    """Everything needed to build the headlight rule base.

    Term maps are stored as tuples of ``(name, membership)`` pairs so the
    config stays hashable; use :attr:`input_term_map` for dict access.
    """

    comfort: ComfortZone = field(default_factory=ComfortZone)
    input_universe: Universe = Universe(0.0, 10.0, 1001)
    output_universe: Universe = Universe(0.0, 2.0e4, 1001)
    input_terms: tuple = ()
    output_terms: tuple = ()
    rules: tuple = DEFAULT_RULES
    lamp: LampSpec = field(default_factory=LampSpec)
    anchors: tuple = ANCHOR_POINTS
    anchor_tolerance: float = ANCHOR_TOLERANCE

    def __post_init__(self):
        for name in ("input_terms", "output_terms"):
            terms = getattr(self, name)
            items = terms.items() if isinstance(terms, Mapping) else terms
            object.__setattr__(self, name, tuple((str(k), v) for k, v in items))
        object.__setattr__(self, "rules", tuple((str(a), str(c)) for a, c in self.rules))
        object.__setattr__(self, "anchors", tuple((float(i), float(o)) for i, o in self.anchors))

    @property
    def input_term_map(self) -> dict[str, MembershipFunction]:
        return dict(self.input_terms)

    @property
    def output_term_map(self) -> dict[str, MembershipFunction]:
        return dict(self.output_terms)

    def to_dict(self) -> dict:
        return {
            "comfort": {
                "i_pc_low": self.comfort.i_pc_low,
                "i_pc": self.comfort.i_pc,
                "blind_spot_distance": self.comfort.blind_spot_distance,
                "critical_band": list(self.comfort.critical_band),
                "glare_angle_threshold_deg": self.comfort.glare_angle_threshold_deg,
            },
            "input_universe": _universe_to_dict(self.input_universe),
            "output_universe": _universe_to_dict(self.output_universe),
            "input_terms": {k: _mf_to_dict(v) for k, v in self.input_terms},
            "output_terms": {k: _mf_to_dict(v) for k, v in self.output_terms},
            "rules": [{"if": a, "then": c} for a, c in self.rules],
            "lamp": {"v_max": self.lamp.v_max, "o_max": self.lamp.o_max, "gamma": self.lamp.gamma},
            "anchors": [{"i_p": i, "o_p": o} for i, o in self.anchors],
            "anchor_tolerance": self.anchor_tolerance,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ControllerConfig":
        try:
            comfort = doc.get("comfort", {})
            return cls(
                comfort=ComfortZone(**comfort),
                input_universe=_universe_from_dict(doc["input_universe"]),
                output_universe=_universe_from_dict(doc["output_universe"]),
                input_terms={k: _mf_from_dict(v) for k, v in doc["input_terms"].items()},
                output_terms={k: _mf_from_dict(v) for k, v in doc["output_terms"].items()},
                rules=[(r["if"], r["then"]) for r in doc.get("rules", [{"if": a, "then": c} for a, c in DEFAULT_RULES])],
                lamp=LampSpec(**doc.get("lamp", {})),
                anchors=[(a["i_p"], a["o_p"]) for a in doc.get("anchors", [])],
                anchor_tolerance=float(doc.get("anchor_tolerance", ANCHOR_TOLERANCE)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigurationError(f"malformed controller config: {exc!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ControllerConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"controller config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ControllerConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _universe_to_dict(u: Universe) -> dict:
    return {"min": u.min, "max": u.max, "resolution": u.resolution}


def _universe_from_dict(d) -> Universe:
    return Universe(float(d["min"]), float(d["max"]), int(d.get("resolution", 1001)))


def _mf_to_dict(mf) -> dict:
    if isinstance(mf, Gaussian):
        return {"shape": "gaussian", "mean": mf.mean, "sigma": mf.sigma}
    return {"shape": "trapezoid", "a": mf.a, "b": mf.b, "c": mf.c, "d": mf.d}


def _mf_from_dict(d):
    shape = d.get("shape")
    if shape == "gaussian":
        return Gaussian(float(d["mean"]), float(d["sigma"]))
    if shape == "trapezoid":
        return Trapezoid(float(d["a"]), float(d["b"]), float(d["c"]), float(d["d"]))
    raise ConfigurationError(f"unknown membership shape {shape!r}")


def super_user_scale(sigma: float, su) -> float:
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return sigma * as_super_user(su).factor


def _scale_term(mf, su: SuperUser):
    if isinstance(mf, Gaussian):
        return Gaussian(mf.mean, super_user_scale(mf.sigma, su))
    return mf


def _check_structure(config: ControllerConfig) -> None:
    ins, outs = config.input_term_map, config.output_term_map
    if "Comfort" not in ins or "Comfort" not in outs:
        raise ConfigurationError("config needs a Comfort term on both input and output")
    if not config.rules:
        raise ConfigurationError("config has no rules")
    for a, c in config.rules:
        if a not in ins:
            raise ConfigurationError(f"rule antecedent {a!r} is not an input term")
        if c not in outs:
            raise ConfigurationError(f"rule consequent {c!r} is not an output term")


@lru_cache(maxsize=256)
def _build(config: ControllerConfig, su: SuperUser) -> FuzzyRuleBase:
    _check_structure(config)
    inp = LinguisticVariable(
        INPUT_NAME,
        config.input_universe,
        {k: _scale_term(v, su) for k, v in config.input_terms},
    )
    out = LinguisticVariable(OUTPUT_NAME, config.output_universe, config.output_term_map)
    rules = [FuzzyRule(((INPUT_NAME, a),), (OUTPUT_NAME, c)) for a, c in config.rules]
    return FuzzyRuleBase((inp,), out, rules)


def build_headlight_fis(config: ControllerConfig | None = None, su=1.0) -> FuzzyRuleBase:
    """Rule base for ``config`` with input-term sigmas scaled by the super-user factor."""
    return _build(config or default_config(), as_super_user(su))


def control(i_p: float, su=1.0, config: ControllerConfig | None = None) -> float:
    """Commanded outgoing lamp level O_p (lux) for received illuminance ``i_p``."""
    i_p = float(i_p)
    if math.isnan(i_p) or i_p < 0:
        raise DomainError(f"received illuminance must be non-negative, got {i_p}")
    return infer(build_headlight_fis(config, su), {INPUT_NAME: i_p})


def control_many(i_p: Sequence[float], su=1.0, config: ControllerConfig | None = None) -> np.ndarray:
    arr = np.asarray(i_p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("received illuminance must be non-negative")
    return infer_many(build_headlight_fis(config, su), {INPUT_NAME: arr})


def lamp_voltage(o_p: float, lamp: LampSpec | None = None) -> float:
    """Bulb voltage producing ``o_p`` under the power law ``O ~ V**gamma``, saturating at ``v_max``."""
    lamp = lamp or LampSpec()
    if math.isnan(o_p) or o_p < 0:
        raise DomainError(f"lamp output must be non-negative, got {o_p}")
    frac = min(o_p, lamp.o_max) / lamp.o_max
    return min(max(lamp.v_max * frac ** (1.0 / lamp.gamma), 0.0), lamp.v_max)


def surface(config: ControllerConfig | None, ips: Iterable[float], sus: Iterable[float]) -> np.ndarray:
    """O_p over a grid; shape ``(len(ips), len(sus))``."""
    ips = np.asarray(list(ips), dtype=float)
    cols = [control_many(ips, su, config) for su in sus]
    return np.column_stack(cols) if cols else np.empty((ips.size, 0))


# ---------------------------------------------------------------- invariants


@dataclass(frozen=True)
class InvariantCheck:
    name: str
    passed: bool
    detail: str = ""


def anchor_residuals(config: ControllerConfig, anchors=None, su=1.0) -> list[float]:
    """Relative error ``(O_p - target) / target`` at each anchor."""
    anchors = config.anchors if anchors is None else anchors
    if not anchors:
        return []
    ips = [a[0] for a in anchors]
    got = control_many(ips, su, config)
    return [float((g - t) / t) for g, (_, t) in zip(got, anchors)]


def comfort_output_centroid(config: ControllerConfig) -> float:
    mf = config.output_term_map["Comfort"]
    grid = config.output_universe.grid
    mu = np.clip(mf(grid), 0.0, 1.0)
    return float(np.dot(grid, mu) / mu.sum())


def check_config(config: ControllerConfig) -> list[InvariantCheck]:
    """Evaluate every ControllerConfig invariant; never raises for a parsed config."""
    checks = []
    try:
        _check_structure(config)
        checks.append(InvariantCheck("terms and rules well formed", True))
    except ConfigurationError as exc:
        return [InvariantCheck("terms and rules well formed", False, str(exc))]

    cz = config.comfort
    expected_opc = cz.i_pc * cz.blind_spot_distance**2
    checks.append(InvariantCheck(
        "o_pc = i_pc * blind_spot_distance^2",
        math.isclose(cz.o_pc, expected_opc, rel_tol=1e-12),
        f"o_pc={cz.o_pc:.6g}",
    ))

    comfort_in = config.input_term_map["Comfort"]
    mean = getattr(comfort_in, "mean", None)
    if mean is None:
        mean = 0.5 * (comfort_in.b + comfort_in.c)
    checks.append(InvariantCheck(
        "Comfort mean = i_pc",
        math.isclose(mean, cz.i_pc, rel_tol=1e-9, abs_tol=1e-12),
        f"mean={mean:g} i_pc={cz.i_pc:g}",
    ))

    centroid = comfort_output_centroid(config)
    rel = abs(centroid - cz.o_pc) / cz.o_pc
    checks.append(InvariantCheck(
        "Comfort output centroid = o_pc within 1%",
        rel <= COMFORT_CENTROID_TOLERANCE,
        f"centroid={centroid:.6g} o_pc={cz.o_pc:.6g} rel={rel:.3%}",
    ))

    try:
        for su in (SU_MIN, 1.0, SU_MAX):
            build_headlight_fis(config, su)
        checks.append(InvariantCheck("rule coverage for every super-user factor", True))
    except ConfigurationError as exc:
        checks.append(InvariantCheck("rule coverage for every super-user factor", False, str(exc)))
        return checks

    if config.anchors:
        res = anchor_residuals(config)
        worst = max(abs(r) for r in res)
        detail = ", ".join(f"I_p={i:g}: {r:+.2%}" for (i, _), r in zip(config.anchors, res))
        checks.append(InvariantCheck(
            f"anchors within {config.anchor_tolerance:.0%}",
            worst <= config.anchor_tolerance,
            detail,
        ))
    return checks


# --------------------------------------------------------- surface shape

SURFACE_GRID = np.round(np.arange(1.0, 8.0 + 1e-9, 0.1), 10)
ORDERING_POINTS = (2.0, 2.5, 3.0, 4.0, 5.0)
COMFORT_BAND = (3.0, 3.8)


def surface_violations(config: ControllerConfig) -> dict[str, float]:
    """Normalized violation of each rule-surface property; ``<= 1`` means it holds.

    - ``argmin``: surface minimum over I_p in [1, 8] (step 0.1, su=1) within 0.2 lx of I_pC
    - ``comfort_level``: O_p(I_pC) within 10% of o_pc
    - ``monotone``: non-increasing below I_pC, non-decreasing above, 1% slack per step
    - ``su_ordering``: O_p(0.5) >= O_p(1.0) >= O_p(1.5) at the ordering points, slack 1% of span
    - ``su_fixed_point``: O_p(I_pC) varies by at most 1% across su in {0.5, 1, 1.5}
    - ``comfort_band``: O_p within 15% of o_pc for I_p in [3.0, 3.8]
    """
    ipc, opc = config.comfort.i_pc, config.comfort.o_pc
    out = {}
    s1 = control_many(SURFACE_GRID, 1.0, config)
    k = int(np.argmin(np.abs(SURFACE_GRID - ipc)))
    out["argmin"] = abs(SURFACE_GRID[int(np.argmin(s1))] - ipc) / 0.2
    out["comfort_level"] = abs(s1[k] - opc) / opc / 0.10
    rise_below = np.diff(s1[: k + 1]) / s1[:k]
    fall_above = -np.diff(s1[k:]) / s1[k:-1]
    out["monotone"] = max(0.0, rise_below.max(initial=0.0), fall_above.max(initial=0.0)) / 0.01
    slack = 0.01 * config.output_universe.span
    by_su = {su: control_many(ORDERING_POINTS, su, config) for su in (SU_MIN, 1.0, SU_MAX)}
    worst = max(float(np.max(by_su[1.0] - by_su[SU_MIN])), float(np.max(by_su[SU_MAX] - by_su[1.0])))
    out["su_ordering"] = max(0.0, worst) / slack
    fixed = [control(ipc, su, config) for su in (SU_MIN, 1.0, SU_MAX)]
    out["su_fixed_point"] = (max(fixed) - min(fixed)) / fixed[1] / 0.01
    band = control_many(np.linspace(*COMFORT_BAND, 17), 1.0, config)
    out["comfort_band"] = float(np.max(np.abs(band - opc))) / opc / 0.15
    return out


# -------------------------------------------------------------- calibration


def _param_vector(config: ControllerConfig):
    """Flatten the tunable Gaussian parameters; comfort means stay pinned."""
    keys, vals = [], []
    for side, terms in (("in", config.input_terms), ("out", config.output_terms)):
        for name, mf in terms:
            if not isinstance(mf, Gaussian):
                continue
            if name != "Comfort":
                keys.append((side, name, "mean"))
                vals.append(mf.mean)
            keys.append((side, name, "sigma"))
            vals.append(mf.sigma)
    return keys, np.array(vals, dtype=float)


def _with_params(config: ControllerConfig, keys, vals) -> ControllerConfig:
    ins, outs = config.input_term_map, config.output_term_map
    for (side, name, attr), v in zip(keys, vals):
        terms = ins if side == "in" else outs
        terms[name] = replace(terms[name], **{attr: float(v)})
    return replace(config, input_terms=ins, output_terms=outs)


def _ordered(terms, order) -> bool:
    centers = [terms[n].mean for n in order if n in terms and isinstance(terms[n], Gaussian)]
    return all(a < b for a, b in zip(centers, centers[1:]))


def calibrate(
    anchors: Sequence[tuple[float, float]],
    template: ControllerConfig | None = None,
    *,
    tolerance: float = ANCHOR_TOLERANCE,
    max_sweeps: int = 200,
    min_step: float = 1e-4,
    shape: bool = False,
) -> ControllerConfig:
    """Tune term means and sigmas so the controller hits ``anchors``.

    Deterministic coordinate descent from ``template``: each parameter is
    nudged up and down by a relative step, the move that most lowers the
    worst relative anchor error is kept, and steps halve once no move helps.
    Comfort means stay pinned to the comfort zone and term order is kept.

    With ``shape=True`` the objective becomes the worst of the anchor error
    (relative to ``tolerance``) and every :func:`surface_violations` entry, so
    the result also satisfies the rule-surface properties when it succeeds.

    Raises:
        DomainError: fewer than three anchors, or none below / above comfort.
        CalibrationError: best worst-case error still exceeds ``tolerance``.
    """
    template = template or default_template()
    anchors = tuple((float(i), float(o)) for i, o in anchors)
    ipc = template.comfort.i_pc
    if len(anchors) < 3:
        raise DomainError("calibration needs at least three anchors")
    if not (any(i < ipc - NEAR_COMFORT for i, _ in anchors)
            and any(abs(i - ipc) <= NEAR_COMFORT for i, _ in anchors)
            and any(i > ipc + NEAR_COMFORT for i, _ in anchors)):
        raise DomainError("anchors must span below, near and above the comfort input")
    if any(o <= 0 for _, o in anchors):
        raise DomainError("anchor outputs must be positive")

    keys, x = _param_vector(template)
    base = replace(template, anchors=anchors, anchor_tolerance=tolerance)

    def objective(vals):
        if np.any(~np.isfinite(vals)):
            return math.inf
        try:
            cfg = _with_params(base, keys, vals)
            if not (_ordered(cfg.input_term_map, INPUT_TERMS) and _ordered(cfg.output_term_map, OUTPUT_TERMS)):
                return math.inf
            rel = abs(comfort_output_centroid(cfg) - cfg.comfort.o_pc) / cfg.comfort.o_pc
            if rel > COMFORT_CENTROID_TOLERANCE:
                return math.inf
            err = max(abs(r) for r in anchor_residuals(cfg, anchors))
            if shape:
                return max(err / tolerance, *surface_violations(cfg).values())
            return err
        except (ConfigurationError, DomainError, ArithmeticError):
            return math.inf

    best = objective(x)
    step = 0.1
    sweeps = 0
    while step >= min_step and sweeps < max_sweeps and best > 0.0:
        sweeps += 1
        improved = False
        for k in range(len(x)):
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[k] = x[k] * (1.0 + sign * step) if x[k] != 0 else sign * step
                if keys[k][2] == "sigma" and trial[k] <= 0:
                    continue
                val = objective(trial)
                if val < best:
                    best, x, improved = val, trial, True
        if not improved:
            step *= 0.5

    config = _with_params(base, keys, x)
    limit = 1.0 if shape else tolerance
    if not best <= limit:
        residuals = anchor_residuals(config, anchors) if math.isfinite(best) else []
        what = "worst normalized violation" if shape else "worst anchor error"
        raise CalibrationError(
            f"calibration failed: {what} {best:.3g} exceeds {limit:g}; anchor residuals "
            + ", ".join(f"{r:+.2%}" for r in residuals),
            residuals,
        )
    return config


# ----------------------------------------------------------------- defaults

_DATA = Path(__file__).with_name("data")


def default_template() -> ControllerConfig:
    """Uncalibrated starting point: evenly spread terms around the comfort point."""
    o_pc = ComfortZone().o_pc
    return ControllerConfig(
        input_terms={
            "VeryLow": Gaussian(0.5, 0.8),
            "Low": Gaussian(2.0, 0.5),
            "Comfort": Gaussian(3.4, 0.4),
            "High": Gaussian(5.0, 0.6),
            "VeryHigh": Gaussian(8.0, 1.2),
        },
        output_terms={
            "Low": Gaussian(2500.0, 1200.0),
            "Comfort": Gaussian(o_pc, 1000.0),
            "High": Gaussian(12000.0, 1500.0),
            "VeryHigh": Gaussian(16000.0, 1500.0),
        },
    )


@lru_cache(maxsize=1)
def default_config() -> ControllerConfig:
    """The shipped calibrated config (``data/default_config.json``)."""
    return ControllerConfig.load(_DATA / "default_config.json")
