import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headlight_fis.errors import DomainError
from headlight_fis.photometry import (
    BSGF_SCALE,
    GlareGeometry,
    blind_spot_generating_factor,
    comfort_output_intensity,
    estimate_distance,
    estimate_relative_speed,
    glare_angle,
    moving_average_filter,
    received_intensity,
)

O_PC = 7194.4  # 3.4 * 46**2


def on_axis(r):
    return GlareGeometry(r, 0.0)


class TestComfortOutput:
    def test_reference_value(self):
        assert comfort_output_intensity(3.4, 46) == pytest.approx(O_PC, rel=1e-12)
        assert abs(comfort_output_intensity(3.4, 46) - 7200) / 7200 < 0.001

    def test_lower_comfort_bound(self):
        assert comfort_output_intensity(1.0, 46) == 2116.0

    def test_zero(self):
        assert comfort_output_intensity(0.0, 12.0) == 0.0

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_nonpositive_distance(self, r):
        with pytest.raises(DomainError):
            comfort_output_intensity(3.4, r)

    @given(st.floats(1e-3, 1e4))
    def test_ratio_between_band_edges(self, r):
        assert comfort_output_intensity(3.4, r) / comfort_output_intensity(1.0, r) == pytest.approx(3.4, rel=1e-12)


class TestReceivedIntensity:
    def test_inverse_of_comfort_output(self):
        assert received_intensity(O_PC, on_axis(46)) == pytest.approx(3.4, rel=1e-12)

    def test_grazing_angle_vanishes(self):
        values = [received_intensity(1e4, GlareGeometry(10.0, math.pi / 2 - eps)) for eps in (1e-1, 1e-3, 1e-6)]
        assert values[0] > values[1] > values[2] and values[2] < 1e-3

    def test_inverse_square(self):
        assert received_intensity(5000, on_axis(20)) / received_intensity(5000, on_axis(40)) == pytest.approx(4.0)

    def test_geometry_validation(self):
        with pytest.raises(DomainError):
            GlareGeometry(0.0, 0.0)
        with pytest.raises(DomainError):
            GlareGeometry(10.0, math.pi / 2)

    def test_from_offsets(self):
        g = GlareGeometry.from_offsets(3.0, 4.0)
        assert g.r == 5.0 and g.phi == pytest.approx(math.atan(0.75))


class TestEstimateDistance:
    def test_reference(self):
        assert estimate_distance(3.4, O_PC) == pytest.approx(46.0, rel=1e-12)

    def test_square_root_law(self):
        assert estimate_distance(0.5, 8000) / estimate_distance(2.0, 8000) == pytest.approx(2.0)

    @pytest.mark.parametrize("ip", [0.0, -1.0])
    def test_needs_positive_reading(self, ip):
        with pytest.raises(DomainError):
            estimate_distance(ip, 1000)

    @settings(max_examples=100)
    @given(st.floats(1.0, 1e5), st.floats(0.5, 2000))
    def test_roundtrip(self, source, r):
        got = estimate_distance(received_intensity(source, on_axis(r)), source)
        assert got == pytest.approx(r, rel=1e-9)


class TestRelativeSpeed:
    def test_definition(self):
        assert estimate_relative_speed(4.0, 200.0) == 50.0

    def test_accepts_pulse_like(self):
        class P:
            width = 8.0

        assert estimate_relative_speed(P(), 200.0) == 25.0

    def test_halved_width_doubles_speed(self):
        assert estimate_relative_speed(2.0, 300) == 2 * estimate_relative_speed(4.0, 300)

    @pytest.mark.parametrize("w", [0.0, -2.0])
    def test_bad_width(self, w):
        with pytest.raises(DomainError):
            estimate_relative_speed(w, 100)


class TestBsgf:
    def test_unity_at_reference(self):
        assert blind_spot_generating_factor(3.4, on_axis(46)) == pytest.approx(1.0, rel=1e-12)

    def test_half_distance(self):
        assert blind_spot_generating_factor(3.4, on_axis(23)) == pytest.approx(4.0, rel=1e-12)

    def test_angle_and_intensity_combined(self):
        g = GlareGeometry(46.0, math.radians(60))
        assert blind_spot_generating_factor(6.8, g) == pytest.approx(1.0, rel=1e-12)

    def test_scale_constant(self):
        assert BSGF_SCALE == 46.0**2 / 3.4


class TestGlareAngle:
    def test_on_axis(self):
        assert glare_angle(0.0, 30.0) == 0.0

    def test_forty_five_degrees(self):
        assert glare_angle(7.0, 7.0) == pytest.approx(math.pi / 4)

    def test_monotone_as_gap_closes(self):
        angles = [glare_angle(3.5, d) for d in (200, 100, 50, 20, 5, 1)]
        assert all(a < b for a, b in zip(angles, angles[1:]))

    def test_crossed_is_domain_error(self):
        with pytest.raises(DomainError):
            glare_angle(3.5, 0.0)


class TestMovingAverage:
    def test_window_one_identity(self):
        x = np.random.default_rng(1).random(50)
        np.testing.assert_array_equal(moving_average_filter(x, 1), x)

    def test_constant_unchanged(self):
        x = np.full(30, 0.1)
        np.testing.assert_array_equal(moving_average_filter(x, 7), x)

    def test_truncated_edges(self):
        np.testing.assert_allclose(moving_average_filter([1, 2, 3, 4, 5], 3), [1.5, 2, 3, 4, 4.5])

    def test_errors(self):
        with pytest.raises(DomainError):
            moving_average_filter([], 1)
        with pytest.raises(DomainError):
            moving_average_filter([1, 2], 3)
        with pytest.raises(DomainError):
            moving_average_filter([1, 2], 0)

    @given(st.lists(st.floats(0, 1e3), min_size=1, max_size=60), st.integers(1, 9))
    def test_range_never_expands(self, xs, w):
        w = min(w, len(xs))
        y = moving_average_filter(xs, w)
        assert y.max() <= max(xs) and y.min() >= min(xs)

    def test_noisy_sawtooth_peak_time(self):
        # inverse-square rise to crossover at sample 400, then instant drop
        n, peak = 600, 400
        k = np.arange(n)
        clean = np.where(k <= peak, 1.0 / (1.0 + np.abs(peak - k) * 0.05) ** 2, 0.0)
        noisy = clean + np.random.default_rng(7).normal(0, 0.002, n)
        window = 5
        filt = moving_average_filter(noisy, window)
        assert abs(int(np.argmax(filt)) - peak) <= window // 2
