"""Point-source photometry, glare geometry and the blind-spot generating factor.

Units: illuminance in lux, luminous intensity in candela, distances in
meters, angles in radians. A commanded lamp output in "lux at reference
geometry" is numerically the candela value of an equivalent point source,
so ``comfort_output_intensity(3.4, 46)`` candela yields 3.4 lx at 46 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: Dark limit of civil dawn; incoming illuminance tolerated without blind spot.
COMFORT_INPUT_LUX = 3.4
#: Most probable distance at which glare blind spots form.
BLIND_SPOT_DISTANCE_M = 46.0
#: BSGF reference point: BSGF == 1 at (3.4 lx, 46 m, on-axis).
BSGF_SCALE = BLIND_SPOT_DISTANCE_M**2 / COMFORT_INPUT_LUX

DEFAULT_FILTER_WINDOW = 5


@dataclass(frozen=True)
class GlareGeometry:
    """Relative position of an oncoming lamp seen from the driver's sensor.

    Build with :meth:`from_offsets` to keep ``r`` and ``phi`` consistent.
    """

    r: float
    phi: float
    lateral_offset: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"separation must be positive, got {self.r}")
        if not 0.0 <= self.phi < math.pi / 2:
            raise DomainError(f"glare angle must lie in [0, pi/2), got {self.phi}")
        if self.lateral_offset < 0:
            raise DomainError("lateral offset must be non-negative")

    @classmethod
    def from_offsets(cls, lateral_offset: float, longitudinal_distance: float) -> "GlareGeometry":
        phi = glare_angle(lateral_offset, longitudinal_distance)
        return cls(math.hypot(lateral_offset, longitudinal_distance), phi, lateral_offset)


def _check_nonneg(name, value):
    if not value >= 0:
        raise DomainError(f"{name} must be non-negative, got {value}")


def comfort_output_intensity(i_pc: float, r: float) -> float:
    """Outgoing lamp level that delivers ``i_pc`` lux at distance ``r``."""
    if not r > 0:
        raise DomainError(f"distance must be positive, got {r}")
    _check_nonneg("comfort illuminance", i_pc)
    return i_pc * r * r


def received_intensity(source: float, geom: GlareGeometry) -> float:
    """Illuminance on a forward-facing directional sensor from a point source."""
    _check_nonneg("source intensity", source)
    return source * math.cos(geom.phi) / (geom.r * geom.r)


def estimate_distance(i_p: float, assumed_source: float) -> float:
    """Invert the on-axis inverse-square law: distance from received lux."""
    if not i_p > 0:
        raise DomainError(f"received illuminance must be positive, got {i_p}")
    if not assumed_source > 0:
        raise DomainError(f"assumed source intensity must be positive, got {assumed_source}")
    return math.sqrt(assumed_source / i_p)


def detection_range(threshold: float, assumed_source: float) -> float:
    """Distance at which an on-axis source first reaches ``threshold`` lux."""
    return estimate_distance(threshold, assumed_source)


def estimate_relative_speed(pulse, detection_range: float) -> float:
    """Closing speed from a pulse's width and the range at which it was detected.

    ``pulse`` is anything with a ``width`` attribute in seconds, or a bare
    number of seconds.
    """
    width = float(getattr(pulse, "width", pulse))
    if not width > 0:
        raise DomainError(f"pulse width must be positive, got {width}")
    if not detection_range > 0:
        raise DomainError(f"detection range must be positive, got {detection_range}")
    return detection_range / width


def blind_spot_generating_factor(i_p: float, geom: GlareGeometry) -> float:
    """Glare risk index, proportional to ``i_p * cos(phi) / r**2``, unity at the reference."""
    _check_nonneg("received illuminance", i_p)
    return BSGF_SCALE * i_p * math.cos(geom.phi) / (geom.r * geom.r)


def glare_angle(lateral_offset: float, longitudinal_distance: float) -> float:
    if not longitudinal_distance > 0:
        raise DomainError(f"longitudinal distance must be positive, got {longitudinal_distance}")
    if lateral_offset < 0:
        raise DomainError(f"lateral offset must be non-negative, got {lateral_offset}")
    return math.atan(lateral_offset / longitudinal_distance)


def moving_average_filter(samples, window: int = DEFAULT_FILTER_WINDOW) -> np.ndarray:
    """Centered moving average; near the edges the window is truncated.

    Even windows reach one sample further back than forward.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("moving average needs a non-empty 1-D series")
    if int(window) != window or window < 1 or window > x.size:
        raise DomainError(f"window must be an integer in [1, {x.size}], got {window}")
    window = int(window)
    back = window // 2
    fwd = window - 1 - back
    padded = np.concatenate((np.full(back, np.nan), x, np.full(fwd, np.nan)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    out = np.nanmean(windows, axis=1)
    # averaging rounding can step outside the data range by an ulp
    return np.clip(out, x.min(), x.max())
