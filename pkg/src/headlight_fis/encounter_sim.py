"""Two-vehicle night-time encounter on a straight two-lane highway.

Vehicle A drives in +x, vehicle B approaches in the opposite lane. Each step:

1. geometry from kinematics (longitudinal gap, glare angle, separation),
2. each vehicle's directional sensor receives the other lamp's output from
   the *previous* step as a point source (one-step feedback delay),
3. Gaussian noise (optional), saturation, causal moving-average filter,
4. controlled vehicles command ``O_p = control(filtered I_p)``; uncontrolled
   vehicles hold a fixed beam.

The run stops at crossover (longitudinal gap reaches zero). All randomness
comes from the scenario seed, so identical scenarios give identical traces.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import photometry
from .controller import ControllerConfig, LampSpec, SuperUser, control, default_config, lamp_voltage
from .errors import ConfigurationError, DomainError, ParseError
from .photometry import GlareGeometry

CLOSED_LOOP = "closed_loop"
STANDALONE = "standalone"

TRACE_COLUMNS = (
    "t", "r", "phi",
    "ip_a_raw", "ip_a_filt", "op_a", "v_a", "bsgf_a",
    "ip_b_raw", "ip_b_filt", "op_b", "v_b", "bsgf_b",
)


@dataclass(frozen=True)
class SensorModel:
    detection_threshold: float = 0.05
    noise_std: float = 0.0
    filter_window: int = photometry.DEFAULT_FILTER_WINDOW
    saturation: float = 50.0

    def __post_init__(self):
        if not 0 < self.detection_threshold < self.saturation:
            raise ConfigurationError("sensor needs 0 < detection_threshold < saturation")
        if self.noise_std < 0:
            raise ConfigurationError("sensor noise_std must be non-negative")
        if int(self.filter_window) != self.filter_window or self.filter_window < 1:
            raise ConfigurationError("sensor filter_window must be a positive integer")

    def read(self, lux: float, rng: np.random.Generator | None) -> float:
        """Raw reading: add noise, then clip to [0, saturation]."""
        if self.noise_std > 0 and rng is not None:
            lux = lux + rng.normal(0.0, self.noise_std)
        return min(max(lux, 0.0), self.saturation)


@dataclass(frozen=True)
class EncounterScenario:
    speed_a: float = 25.0
    speed_b: float = 25.0
    initial_separation: float = 500.0
    lane_offset: float = 3.5
    dt: float = 0.05
    mode: str = CLOSED_LOOP
    uncontrolled_beam: float = 2.0e4
    su_a: float = 1.0
    su_b: float = 1.0
    seed: int = 0
    sensor: SensorModel = field(default_factory=SensorModel)
    config: ControllerConfig | None = None
    #: Run-length guard beyond the crossover time, seconds.
    time_margin: float = 5.0

    def __post_init__(self):
        if not self.initial_separation > 0:
            raise ConfigurationError("initial_separation must be positive")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.speed_a < 0 or self.speed_b < 0:
            raise ConfigurationError("speed_a and speed_b must be non-negative")
        if not self.closing_speed > 0:
            raise ConfigurationError("closing speed is zero: the vehicles never cross (speed_a + speed_b must be > 0)")
        if self.lane_offset < 0:
            raise ConfigurationError("lane_offset must be non-negative")
        if self.mode not in (CLOSED_LOOP, STANDALONE):
            raise ConfigurationError(f"mode must be {CLOSED_LOOP!r} or {STANDALONE!r}, got {self.mode!r}")
        if not self.uncontrolled_beam >= 0:
            raise ConfigurationError("uncontrolled_beam must be non-negative")
        for name in ("su_a", "su_b"):
            try:
                SuperUser(getattr(self, name))
            except DomainError as exc:
                raise ConfigurationError(f"{name}: {exc}") from exc

    @property
    def closing_speed(self) -> float:
        return self.speed_a + self.speed_b

    @property
    def max_time(self) -> float:
        return self.initial_separation / self.closing_speed + self.time_margin

    @property
    def controller(self) -> ControllerConfig:
        return self.config or default_config()

    def to_dict(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("sensor", "config")}
        doc["sensor"] = asdict(self.sensor)
        if self.config is not None:
            doc["config"] = self.config.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: Path | None = None) -> "EncounterScenario":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        kwargs = dict(doc)
        try:
            if "sensor" in kwargs:
                kwargs["sensor"] = SensorModel(**kwargs["sensor"])
            cfg = kwargs.get("config")
            if isinstance(cfg, str):
                path = Path(cfg)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                kwargs["config"] = ControllerConfig.load(path)
            elif isinstance(cfg, Mapping):
                kwargs["config"] = ControllerConfig.from_dict(cfg)
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"invalid scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EncounterScenario":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"scenario {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, Mapping):
            raise ConfigurationError("scenario document must be a JSON object")
        return cls.from_dict(doc, path.parent)


@dataclass
class VehicleState:
    """Mutable per-vehicle simulation state."""

    position: float
    speed: float
    lateral_offset: float
    lamp: LampSpec
    controlled: bool
    su: float
    op: float
    raw_history: list = field(default_factory=list)


@dataclass(frozen=True)
class TraceSample:
    t: float
    r: float
    phi: float
    ip_a_raw: float
    ip_a_filt: float
    op_a: float
    v_a: float
    bsgf_a: float
    ip_b_raw: float
    ip_b_filt: float
    op_b: float
    v_b: float
    bsgf_b: float

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


@dataclass
class SimState:
    k: int
    a: VehicleState
    b: VehicleState
    rng: np.random.Generator


def initial_state(scenario: EncounterScenario) -> SimState:
    """Both lamps start at the level commanded in darkness (or the fixed beam)."""
    cfg = scenario.controller

    def vehicle(speed, su, controlled):
        op = control(0.0, su, cfg) if controlled else scenario.uncontrolled_beam
        return VehicleState(0.0, speed, scenario.lane_offset, cfg.lamp, controlled, su, op)

    return SimState(
        0,
        vehicle(scenario.speed_a, scenario.su_a, True),
        vehicle(scenario.speed_b, scenario.su_b, scenario.mode == CLOSED_LOOP),
        np.random.default_rng(scenario.seed),
    )


def longitudinal_gap(scenario: EncounterScenario, t: float) -> float:
    return scenario.initial_separation - scenario.closing_speed * t


def _sense(vehicle: VehicleState, lux: float, sensor: SensorModel, rng) -> tuple[float, float]:
    raw = sensor.read(lux, rng)
    vehicle.raw_history.append(raw)
    if len(vehicle.raw_history) > sensor.filter_window:
        del vehicle.raw_history[0]
    # causal: only samples already received can be averaged
    return raw, float(np.mean(vehicle.raw_history))


def step(scenario: EncounterScenario, state: SimState) -> TraceSample:
    """Advance ``state`` by one step in place and return the logged sample.

    Raises:
        DomainError: the vehicles have already crossed.
    """
    t = state.k * scenario.dt
    gap = longitudinal_gap(scenario, t)
    if not gap > 0:
        raise DomainError(f"vehicles already crossed at t={t:g}s")
    geom = GlareGeometry.from_offsets(scenario.lane_offset, gap)
    cfg = scenario.controller
    sensor = scenario.sensor

    # previous-step outputs are the sources seen now
    src_for_a, src_for_b = state.b.op, state.a.op
    ip_a, filt_a = _sense(state.a, photometry.received_intensity(src_for_a, geom), sensor, state.rng)
    ip_b, filt_b = _sense(state.b, photometry.received_intensity(src_for_b, geom), sensor, state.rng)

    for veh, filt in ((state.a, filt_a), (state.b, filt_b)):
        if veh.controlled:
            veh.op = control(filt, veh.su, cfg)
        veh.position += veh.speed * scenario.dt
    state.k += 1

    return TraceSample(
        t=t, r=geom.r, phi=geom.phi,
        ip_a_raw=ip_a, ip_a_filt=filt_a, op_a=state.a.op,
        v_a=lamp_voltage(state.a.op, state.a.lamp),
        bsgf_a=photometry.blind_spot_generating_factor(ip_a, geom),
        ip_b_raw=ip_b, ip_b_filt=filt_b, op_b=state.b.op,
        v_b=lamp_voltage(state.b.op, state.b.lamp),
        bsgf_b=photometry.blind_spot_generating_factor(ip_b, geom),
    )


def simulate_encounter(scenario: EncounterScenario) -> list[TraceSample]:
    state = initial_state(scenario)
    trace = []
    n_max = int(math.ceil(scenario.max_time / scenario.dt))
    while state.k <= n_max and longitudinal_gap(scenario, state.k * scenario.dt) > 0:
        trace.append(step(scenario, state))
    return trace


# ------------------------------------------------------------ traffic streams


@dataclass(frozen=True)
class OncomingVehicle:
    """An uncontrolled oncoming vehicle; ``start_offset`` is its gap at t=0."""

    start_offset: float
    speed: float
    beam: float = 2.0e4
    lane_offset: float = 3.5


@dataclass(frozen=True)
class IntensitySeries:
    t: np.ndarray
    lux: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0


def generate_traffic_stream(
    vehicles: Sequence[OncomingVehicle],
    sensor: SensorModel | None = None,
    *,
    ego_speed: float = 0.0,
    dt: float = 0.05,
    duration: float | None = None,
    seed: int = 0,
) -> IntensitySeries:
    """Received illuminance from a train of oncoming vehicles.

    Contributions add; a vehicle stops contributing once it has passed
    (the sensor faces forward).
    """
    sensor = sensor or SensorModel()
    if not dt > 0:
        raise DomainError("dt must be positive")
    starts = [v.start_offset for v in vehicles]
    if starts != sorted(starts):
        raise DomainError("vehicles must be ordered by arrival (increasing start_offset)")
    if duration is None:
        ends = [v.start_offset / (v.speed + ego_speed) for v in vehicles if v.speed + ego_speed > 0]
        duration = (max(ends) if ends else 0.0) + 2.0
    n = int(math.floor(duration / dt)) + 1
    t = np.arange(n) * dt
    lux = np.zeros(n)
    for v in vehicles:
        gap = v.start_offset - (v.speed + ego_speed) * t
        ahead = gap > 0
        r2 = gap[ahead] ** 2 + v.lane_offset**2
        cos_phi = gap[ahead] / np.sqrt(r2)
        lux[ahead] += v.beam * cos_phi / r2
    if sensor.noise_std > 0:
        lux = lux + np.random.default_rng(seed).normal(0.0, sensor.noise_std, n)
    return IntensitySeries(t, np.clip(lux, 0.0, sensor.saturation))


# ------------------------------------------------------------ pulse analysis


@dataclass(frozen=True)
class PulseFeature:
    start: float
    peak_time: float
    crossover: float
    width: float
    peak_intensity: float


def _crossing(t0, v0, t1, v1, level):
    if v1 == v0:
        return t1
    return t0 + (level - v0) * (t1 - t0) / (v1 - v0)


def detect_pulses(times, series, threshold: float | SensorModel = 0.05) -> list[PulseFeature]:
    """Segment a uniformly sampled series into above-threshold pulses.

    Crossing times are linearly interpolated between samples. A pulse still
    above threshold at either end of the series is cut at that end.
    """
    if isinstance(threshold, SensorModel):
        threshold = threshold.detection_threshold
    t = np.asarray(times, dtype=float)
    v = np.asarray(series, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise DomainError("times and series must be 1-D arrays of equal length")
    above = v >= threshold
    pulses = []
    i, n = 0, v.size
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        start = t[i] if i == 0 else _crossing(t[i - 1], v[i - 1], t[i], v[i], threshold)
        end = t[j] if j == n - 1 else _crossing(t[j], v[j], t[j + 1], v[j + 1], threshold)
        k = i + int(np.argmax(v[i:j + 1]))
        if end > start:
            pulses.append(PulseFeature(float(start), float(t[k]), float(end), float(end - start), float(v[k])))
        i = j + 1
    return pulses


# ------------------------------------------------------------ trace CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(trace: Iterable[TraceSample], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for s in trace:
        writer.writerow([_fmt(x) for x in s.row()])


def trace_to_csv(trace: Iterable[TraceSample]) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()


def read_trace_csv(fh) -> list[TraceSample]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("line 1: empty trace file") from None
    if tuple(h.strip() for h in header) != TRACE_COLUMNS:
        raise ParseError(f"line 1: trace header must be {','.join(TRACE_COLUMNS)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise ParseError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
        try:
            out.append(TraceSample(*(float(x) for x in row)))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    return out


def trace_column(trace: Sequence[TraceSample], name: str) -> np.ndarray:
    if name not in TRACE_COLUMNS:
        raise DomainError(f"unknown trace column {name!r}")
    return np.array([getattr(s, name) for s in trace], dtype=float)


# ------------------------------------------------------------ scene rendering


def render_scene_brightness(image, o_p: float, config: ControllerConfig | None = None,
                            reference: float | None = None) -> np.ndarray:
    """Scale an 8-bit grayscale scene by ``o_p / reference``.

    ``reference`` defaults to the comfort output of ``config``; at
    ``o_p == reference`` the image is returned unchanged.
    """
    img = np.asarray(image)
    if img.size == 0:
        raise DomainError("cannot render an empty image")
    if np.any(img < 0) or np.any(img > 255):
        raise DomainError("pixel values must lie in [0, 255]")
    if reference is None:
        reference = (config or default_config()).comfort.o_pc
    if not reference > 0:
        raise DomainError("reference output must be positive")
    if o_p < 0:
        raise DomainError("commanded output must be non-negative")
    scale = o_p / reference
    if scale == 1.0:
        return img.astype(np.uint8, copy=True)
    return np.clip(np.rint(img.astype(float) * scale), 0, 255).astype(np.uint8)


def read_pgm(path) -> np.ndarray:
    """Load an 8-bit binary (P5) PGM.

    Raises:
        OSError: the file cannot be read.
        ParseError: the file is not an 8-bit P5 PGM.
    """
    from PIL import Image, UnidentifiedImageError

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise ParseError(f"{path}: not a binary (P5) PGM")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode != "L":
                raise ParseError(f"{path}: only 8-bit PGM is supported (mode {im.mode})")
            return np.array(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: malformed PGM: {exc}") from exc


def write_pgm(path, image) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(path, format="PPM")
