"""Mamdani fuzzy inference: membership shapes, rule bases and centroid defuzzification.

Inference uses min for AND, min for implication (clipping) and max for
aggregation. Crisp inputs outside a variable's universe are clamped to it.
A rule base is immutable once built, so inference is safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError, NoRuleFiredError

__all__ = [
    "Universe",
    "Gaussian",
    "Trapezoid",
    "MembershipFunction",
    "LinguisticVariable",
    "FuzzyRule",
    "FuzzyRuleBase",
    "Fuzzification",
    "AggregatedSet",
    "membership",
    "fuzzify",
    "evaluate_rules",
    "defuzzify_centroid",
    "infer",
    "infer_many",
]

MIN_RESOLUTION = 101


@dataclass(frozen=True)
class Universe:
    """Closed real interval discretized into ``resolution`` uniform points."""

    min: float
    max: float
    resolution: int = 1001

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)) or self.min >= self.max:
            raise ConfigurationError(f"universe needs finite min < max, got [{self.min}, {self.max}]")
        if int(self.resolution) != self.resolution or self.resolution < MIN_RESOLUTION:
            raise ConfigurationError(f"universe resolution must be an integer >= {MIN_RESOLUTION}")

    @cached_property
    def grid(self) -> np.ndarray:
        grid = np.linspace(self.min, self.max, int(self.resolution))
        grid.flags.writeable = False
        return grid

    @property
    def span(self) -> float:
        return self.max - self.min

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.min + self.max)

    def clamp(self, x: float) -> float:
        return min(max(x, self.min), self.max)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ConfigurationError("gaussian mean must be finite")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError(f"gaussian sigma must be positive, got {self.sigma}")

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sigma
        return np.exp(-0.5 * z * z)

    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def scaled(self, factor: float) -> "Gaussian":
        return Gaussian(self.mean, self.sigma * factor)


@dataclass(frozen=True)
class Trapezoid:
    """Trapezoid with feet ``a``, ``d`` and plateau ``[b, c]``.

    ``a == b`` or ``c == d`` gives a shoulder: the degree is 1 from the
    plateau up to (and including) the coincident foot.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        pts = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(p) for p in pts):
            raise ConfigurationError("trapezoid corners must be finite")
        if not self.a <= self.b <= self.c <= self.d:
            raise ConfigurationError(f"trapezoid corners must satisfy a <= b <= c <= d, got {pts}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[(x >= self.b) & (x <= self.c)] = 1.0
        if self.b > self.a:
            rise = (x > self.a) & (x < self.b)
            out[rise] = (x[rise] - self.a) / (self.b - self.a)
        if self.d > self.c:
            fall = (x > self.c) & (x < self.d)
            out[fall] = (self.d - x[fall]) / (self.d - self.c)
        return np.clip(out, 0.0, 1.0)

    def support(self) -> tuple[float, float]:
        return (self.a, self.d)


MembershipFunction = Union[Gaussian, Trapezoid]


def membership(mf: MembershipFunction, x: float) -> float:
    """Degree of membership of a finite crisp value ``x`` in ``mf``."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"membership needs a finite input, got {x}")
    return float(np.clip(mf(x), 0.0, 1.0))


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    universe: Universe
    terms: Mapping[str, MembershipFunction]

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("linguistic variable needs a name")
        if isinstance(self.terms, Mapping):
            items = list(self.terms.items())
        else:
            items = list(self.terms)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate term names in variable {self.name!r}")
        if not items:
            raise ConfigurationError(f"variable {self.name!r} has no terms")
        for term, mf in items:
            lo, hi = mf.support()
            if hi < self.universe.min or lo > self.universe.max:
                raise ConfigurationError(
                    f"term {term!r} of {self.name!r} does not intersect the universe"
                )
        object.__setattr__(self, "terms", MappingProxyType(dict(items)))

    def __hash__(self):
        return hash((self.name, self.universe, tuple(self.terms.items())))

    def __eq__(self, other):
        if not isinstance(other, LinguisticVariable):
            return NotImplemented
        return (self.name, self.universe, dict(self.terms)) == (
            other.name, other.universe, dict(other.terms))

    @cached_property
    def sampled_terms(self) -> Mapping[str, np.ndarray]:
        """Every term evaluated on the universe grid."""
        sampled = {}
        for term, mf in self.terms.items():
            arr = np.clip(mf(self.universe.grid), 0.0, 1.0)
            arr.flags.writeable = False
            sampled[term] = arr
        return MappingProxyType(sampled)


@dataclass(frozen=True)
class FuzzyRule:
    """IF every (variable, term) antecedent holds THEN (variable, term)."""

    antecedents: tuple[tuple[str, str], ...]
    consequent: tuple[str, str]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(tuple(a) for a in self.antecedents))
        object.__setattr__(self, "consequent", tuple(self.consequent))
        if not self.antecedents:
            raise ConfigurationError("rule needs at least one antecedent")
        if not 0.0 < self.weight <= 1.0:
            raise ConfigurationError(f"rule weight must lie in (0, 1], got {self.weight}")

    def __str__(self):
        cond = " AND ".join(f"{v} is {t}" for v, t in self.antecedents)
        return f"IF {cond} THEN {self.consequent[0]} is {self.consequent[1]}"


class Fuzzification(dict):
    """Term degrees for one crisp input, remembering whether it was clamped."""

    def __init__(self, degrees, value: float, raw: float):
        super().__init__(degrees)
        self.value = value
        self.raw = raw

    @property
    def clamped(self) -> bool:
        return self.value != self.raw


@dataclass(frozen=True)
class AggregatedSet:
    """Output fuzzy set sampled on a uniform grid."""

    grid: np.ndarray
    mu: np.ndarray
    inputs: Mapping[str, float] = field(default_factory=dict)

    @property
    def fired(self) -> bool:
        return bool(np.any(self.mu > 0.0))


@dataclass(frozen=True, eq=False)
class FuzzyRuleBase:
    inputs: tuple[LinguisticVariable, ...]
    output: LinguisticVariable
    rules: tuple[FuzzyRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ConfigurationError("rule base needs at least one rule")
        names = [v.name for v in self.inputs]
        if len(set(names)) != len(names) or self.output.name in names:
            raise ConfigurationError("variable names must be unique across inputs and output")
        by_name = {v.name: v for v in self.inputs}
        for rule in self.rules:
            for var, term in rule.antecedents:
                if var not in by_name:
                    raise ConfigurationError(f"rule references unknown input {var!r}: {rule}")
                if term not in by_name[var].terms:
                    raise ConfigurationError(f"rule references unknown term {var}.{term}: {rule}")
            var, term = rule.consequent
            if var != self.output.name:
                raise ConfigurationError(f"rule consequent must target {self.output.name!r}: {rule}")
            if term not in self.output.terms:
                raise ConfigurationError(f"rule references unknown output term {term!r}: {rule}")
        self._check_coverage()

    def variable(self, name: str) -> LinguisticVariable:
        for v in self.inputs:
            if v.name == name:
                return v
        raise ConfigurationError(f"no input variable named {name!r}")

    def _check_coverage(self):
        mids = {v.name: np.full(v.universe.resolution, v.universe.midpoint) for v in self.inputs}
        for v in self.inputs:
            probe = dict(mids)
            probe[v.name] = v.universe.grid
            strength = self.firing_strengths(probe).max(axis=0)
            if not np.all(strength > 0.0):
                gap = v.universe.grid[np.argmin(strength > 0.0)]
                raise ConfigurationError(
                    f"rule coverage violated: no rule fires for {v.name}={gap:g} "
                    "with other inputs at their midpoints"
                )

    def firing_strengths(self, inputs: Mapping[str, np.ndarray]) -> np.ndarray:
        """Weighted firing strength of every rule, shape ``(n_rules, n_points)``.

        Inputs are clamped to their universes.
        """
        for v in self.inputs:
            if v.name not in inputs:
                raise ConfigurationError(f"missing crisp value for input {v.name!r}")
        shape = np.broadcast_shapes(*(np.shape(inputs[v.name]) for v in self.inputs))
        shape = shape or (1,)
        degrees = {}
        for v in self.inputs:
            x = np.clip(np.asarray(inputs[v.name], dtype=float), v.universe.min, v.universe.max)
            x = np.broadcast_to(x, shape)
            degrees[v.name] = {t: np.clip(mf(x), 0.0, 1.0) for t, mf in v.terms.items()}
        rows = []
        for rule in self.rules:
            s = None
            for var, term in rule.antecedents:
                d = degrees[var][term]
                s = d if s is None else np.minimum(s, d)
            rows.append(s * rule.weight)
        return np.vstack(rows)

    @cached_property
    def _consequent_matrix(self) -> np.ndarray:
        sampled = self.output.sampled_terms
        return np.vstack([sampled[r.consequent[1]] for r in self.rules])


def fuzzify(variable: LinguisticVariable, x: float) -> Fuzzification:
    """Degree of ``x`` in every term of ``variable`` after clamping to its universe."""
    raw = float(x)
    if math.isnan(raw):
        raise DomainError(f"cannot fuzzify NaN for {variable.name!r}")
    value = variable.universe.clamp(raw)
    return Fuzzification({t: membership(mf, value) for t, mf in variable.terms.items()}, value, raw)


def evaluate_rules(rb: FuzzyRuleBase, inputs: Mapping[str, float]) -> AggregatedSet:
    """Clip each consequent at its rule's strength and aggregate with pointwise max."""
    for v in rb.inputs:
        if v.name not in inputs:
            raise ConfigurationError(f"missing crisp value for input {v.name!r}")
        if math.isnan(float(inputs[v.name])):
            raise DomainError(f"input {v.name!r} is NaN")
    strengths = rb.firing_strengths({k: np.float64(inputs[k]) for k in inputs})[:, 0]
    clipped = np.minimum(rb._consequent_matrix, strengths[:, None])
    mu = clipped.max(axis=0)
    return AggregatedSet(rb.output.universe.grid, mu, MappingProxyType(dict(inputs)))


def defuzzify_centroid(aggregated: AggregatedSet) -> float:
    """Center of mass of a sampled fuzzy set on a uniform grid."""
    mu = np.asarray(aggregated.mu, dtype=float)
    total = mu.sum()
    if not total > 0.0:
        raise NoRuleFiredError(aggregated.inputs)
    return float(np.dot(aggregated.grid, mu) / total)


def infer(rb: FuzzyRuleBase, inputs: Mapping[str, float]) -> float:
    return defuzzify_centroid(evaluate_rules(rb, inputs))


def infer_many(rb: FuzzyRuleBase, inputs: Mapping[str, Sequence[float]]) -> np.ndarray:
    """Vectorized :func:`infer` over aligned arrays of crisp inputs."""
    arrays = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in inputs.items()}
    strengths = rb.firing_strengths(arrays)
    cons = rb._consequent_matrix
    grid = rb.output.universe.grid
    out = np.empty(strengths.shape[1])
    chunk = 256
    for lo in range(0, strengths.shape[1], chunk):
        s = strengths[:, lo:lo + chunk]
        mu = np.minimum(cons[:, None, :], s[:, :, None]).max(axis=0)
        for i, row in enumerate(mu):
            # same reduction as defuzzify_centroid so scalar and batch agree bitwise
            total = row.sum()
            if not total > 0.0:
                raise NoRuleFiredError({k: float(a[lo + i]) for k, a in arrays.items()})
            out[lo + i] = np.dot(grid, row) / total
    return out
