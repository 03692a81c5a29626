import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qcurvature.bloch import BlochModel
from qcurvature.errors import DomainError, EmptyDensity, NotConverged
from qcurvature.geometry import build_band_grid
from qcurvature.matsubara import (
    SpectralDensity,
    alternating_sum,
    band_density,
    correlator_at,
    curvature_at_midpoint,
    direct_sum,
    equal_time,
    kernel,
    matsubara_frequency,
    matsubara_sum,
    matsubara_transform,
    spectral_correlator,
)


def single_peak(delta=1.0, g=1.0):
    return SpectralDensity.from_peaks([(delta, math.pi * delta * g)])


def random_density(rng, k=None):
    k = rng.integers(1, 8) if k is None else k
    return SpectralDensity(rng.uniform(0.1, 10.0, k), rng.uniform(0.0, 1.0, k))


densities = st.lists(
    st.tuples(st.floats(0.05, 12.0), st.floats(0.0, 1.0)), min_size=1, max_size=6
).filter(lambda peaks: sum(w for _, w in peaks) > 1e-3).map(SpectralDensity.from_peaks)


class TestKernel:
    def test_zero_frequency_limit(self):
        assert kernel(0, 0.0, 0.7, 2.0) == 1.0
        assert kernel(0, 1e-9, 0.3, 2.0) == pytest.approx(1.0, rel=1e-15)

    def test_equal_time_and_midpoint_values(self):
        d, beta = 1.3, 2.2
        assert kernel(0, d, 0.0, beta) == pytest.approx(d / math.tanh(beta * d / 2), rel=1e-15)
        assert kernel(1, d, beta / 2, beta) == pytest.approx(d ** 3 / math.sinh(beta * d / 2), rel=1e-15)

    def test_higher_orders_vanish_at_zero_frequency(self):
        assert kernel(1, 0.0, 0.2, 1.0) == 0.0
        assert kernel(3, 1e-8, 0.2, 1.0) < 1e-40

    @pytest.mark.parametrize("x", [0.999e-6, 1.001e-6, 1e-5])
    def test_taylor_switch_is_accurate(self, x):
        beta, tau = 3.0, 0.4
        omega = x / beta
        with mpmath.workdps(40):
            om = mpmath.mpf(omega)
            exact = om * mpmath.cosh((beta / 2 - tau) * om) / mpmath.sinh(beta * om / 2)
        assert kernel(0, omega, tau, beta) == pytest.approx(float(exact), rel=1e-13)

    def test_large_argument_does_not_overflow(self):
        value = kernel(2, 500.0, 1.0, 10.0)
        assert value == pytest.approx(500.0 ** 5 * math.exp(-500.0), rel=1e-12)

    def test_vectorized(self):
        out = kernel(0, np.array([0.5, 1.0]), 0.5, 1.0)
        assert out.shape == (2,)

    @pytest.mark.parametrize("tau", [-0.1, 2.1])
    def test_tau_outside_thermal_circle(self, tau):
        with pytest.raises(DomainError):
            kernel(0, 1.0, tau, 2.0)

    def test_order_limit(self):
        with pytest.raises(DomainError):
            kernel(7, 1.0, 0.0, 1.0)


class TestSpectralCorrelator:
    def test_single_peak_closed_form(self):
        delta, g, beta = 1.4, 0.7, 3.0
        corr = spectral_correlator(single_peak(delta, g), beta, 61)
        expected = delta ** 2 * g * np.cosh((beta / 2 - corr.taus) * delta) / np.sinh(beta * delta / 2)
        np.testing.assert_allclose(corr.values, expected, rtol=1e-13)
        assert corr.values[0] == pytest.approx(delta ** 2 * g / math.tanh(beta * delta / 2), rel=1e-14)
        assert corr.midpoint() == pytest.approx(delta ** 2 * g / math.sinh(beta * delta / 2), rel=1e-14)

    def test_linearity(self):
        a = single_peak(1.0)
        both = SpectralDensity.from_peaks([(1.0, math.pi), (1.0, math.pi)])
        np.testing.assert_allclose(
            spectral_correlator(both, 2.0, 21).values, 2 * spectral_correlator(a, 2.0, 21).values, rtol=1e-15
        )

    def test_empty_density(self):
        with pytest.raises(EmptyDensity):
            spectral_correlator(SpectralDensity.from_peaks([]), 1.0, 11)
        with pytest.raises(EmptyDensity):
            spectral_correlator(SpectralDensity.from_peaks([(1.0, 0.0)]), 1.0, 11)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            SpectralDensity.from_peaks([(1.0, -0.1)])

    @settings(max_examples=60, deadline=None)
    @given(d=densities, beta=st.sampled_from([0.5, 2.0, 10.0]))
    def test_kms_and_monotone(self, d, beta):
        corr = spectral_correlator(d, beta, 101)
        assert corr.values[0] > 0
        assert corr.kms_residual() <= 1e-10
        half = corr.values[: 51]
        assert np.all(np.diff(half) <= 1e-14 * corr.values[0])

    def test_kms_holds_without_mirroring(self):
        rng = np.random.default_rng(2)
        d = random_density(rng, 5)
        beta = 2.0
        for tau in np.linspace(0, beta, 17):
            assert correlator_at(d, beta, tau) == pytest.approx(correlator_at(d, beta, beta - tau), rel=1e-12)

    def test_csv(self):
        corr = spectral_correlator(single_peak(), 5.0, 11)
        buf = io.StringIO()
        corr.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "tau,S,s_normalized"
        assert lines[1].endswith(",1")
        assert len(lines) == 12


class TestBandDensity:
    def test_flat_band_coalesces(self):
        grid = build_band_grid(BlochModel.flat_chern(1.0), 64)
        d = band_density(grid)
        assert len(d) == 1
        assert d.omegas[0] == 1.0
        assert d.total_weight == pytest.approx(math.pi * grid.sum(grid.gxx), rel=1e-13)

    def test_equal_time_matches_band_sum(self):
        for model in (BlochModel.flat_chern(1.0), BlochModel.qwz(1.0), BlochModel.qwz(-2.6)):
            grid = build_band_grid(model, 64)
            beta = 5.0
            band = grid.sum(grid.gap ** 2 / np.tanh(beta * grid.gap / 2) * grid.gxx)
            assert equal_time(band_density(grid), beta) == pytest.approx(band, rel=1e-10)

    def test_trivial_is_empty(self):
        d = band_density(build_band_grid(BlochModel.trivial_flat(), 32))
        assert d.is_empty
        with pytest.raises(EmptyDensity):
            spectral_correlator(d, 1.0, 11)


class TestMatsubaraTransform:
    @staticmethod
    def quadrature(d, beta, n):
        wn = matsubara_frequency(n, beta)
        # S(tau) is even about beta/2, so only the cosine part survives.
        val, _ = quad(lambda t: math.cos(wn * t) * correlator_at(d, beta, t), 0.0, beta,
                      epsabs=1e-13, epsrel=1e-12, limit=400)
        return val

    def test_single_peak_zero_frequency(self):
        delta, g = 1.3, 0.8
        assert matsubara_transform(single_peak(delta, g), 4.0, 0) == pytest.approx(2 * g * delta, rel=1e-14)

    @pytest.mark.parametrize("n", [0, 1, 2, 5, 17])
    def test_matches_tau_quadrature(self, n):
        d = SpectralDensity.from_peaks([(0.7, 0.4), (2.5, 1.1), (6.0, 0.3)])
        beta = 2.0
        assert matsubara_transform(d, beta, n) == pytest.approx(self.quadrature(d, beta, n), abs=1e-9)

    def test_even_in_index(self):
        rng = np.random.default_rng(7)
        d = random_density(rng, 6)
        for n in range(1, 10):
            assert matsubara_transform(d, 1.5, n) == matsubara_transform(d, 1.5, -n)

    def test_tail_decays_as_inverse_square(self):
        d = SpectralDensity.from_peaks([(1.0, 0.5), (3.0, 0.2)])
        beta = 1.0
        ns = np.array([200, 400, 800, 1600])
        vals = np.array([matsubara_transform(d, beta, n) for n in ns])
        slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
        assert slope == pytest.approx(-2.0, abs=1e-3)
        tail = vals[-1] * matsubara_frequency(ns[-1], beta) ** 2
        expected = 2 * (0.5 * 1.0 + 0.2 * 9.0) / math.pi
        assert tail == pytest.approx(expected, rel=1e-4)


class TestResummation:
    def test_alternating_single_peak(self):
        # Delta = g = 1, beta = 5: S(beta/2) = 1 / sinh(2.5).
        value = alternating_sum(single_peak(), 5.0, 4096)
        assert value == pytest.approx(1 / math.sinh(2.5), rel=1e-12)
        assert value == pytest.approx(correlator_at(single_peak(), 5.0, 2.5), rel=1e-12)

    def test_direct_single_peak(self):
        value = direct_sum(single_peak(), 5.0, 4096)
        assert value == pytest.approx(1 / math.tanh(2.5), rel=1e-10)

    def test_empty_density_sums_to_zero(self):
        assert alternating_sum(SpectralDensity.from_peaks([]), 1.0, 64) == 0.0

    def test_minimum_terms(self):
        with pytest.raises(DomainError):
            alternating_sum(single_peak(), 1.0, 32)

    def test_unconverged_window_is_reported(self):
        # Peak width in Matsubara index ~ omega beta / 2 pi = 320 >> 64 terms.
        d = SpectralDensity.from_peaks([(200.0, 1.0)])
        with pytest.raises(NotConverged):
            alternating_sum(d, 10.0, 64)

    def test_direct_sum_converges_from_below(self):
        d = SpectralDensity.from_peaks([(0.8, 0.5), (3.0, 1.0)])
        beta = 2.0
        exact = equal_time(d, beta)
        raw = [direct_sum(d, beta, n, accelerate=False) for n in (64, 128, 256, 512)]
        assert all(a < b < exact for a, b in zip(raw, raw[1:]))
        assert direct_sum(d, beta, 512) == pytest.approx(exact, rel=1e-8)

    def test_alternating_randomized(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            d = random_density(rng)
            for beta in (0.5, 2.0, 10.0):
                expected = correlator_at(d, beta, beta / 2)
                assert alternating_sum(d, beta, 128) == pytest.approx(expected, rel=1e-8)

    def test_weighted_square_alternating_gives_curvature(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            d = random_density(rng)
            for beta in (0.5, 2.0, 10.0):
                value = matsubara_sum(d, beta, 128, alternating=True, moment=1)
                assert value == pytest.approx(curvature_at_midpoint(d, beta), rel=1e-6)

    def test_moment_requires_alternation(self):
        with pytest.raises(DomainError):
            matsubara_sum(single_peak(), 1.0, 64, alternating=False, moment=1)


class TestMidpointCurvature:
    def test_single_peak(self):
        delta, g, beta = 1.2, 0.6, 3.0
        value = curvature_at_midpoint(single_peak(delta, g), beta)
        assert value == pytest.approx(delta ** 4 * g / math.sinh(beta * delta / 2), rel=1e-14)

    def test_linear_in_weights(self):
        d = SpectralDensity.from_peaks([(0.5, 0.2), (2.0, 0.9)])
        assert curvature_at_midpoint(d.scaled(2.0), 1.0) == pytest.approx(2 * curvature_at_midpoint(d, 1.0), rel=1e-15)

    def test_second_difference_oracle(self):
        rng = np.random.default_rng(5)
        for beta in (0.5, 2.0, 10.0):
            d = random_density(rng, 4)
            mid = beta / 2

            def second_difference(h):
                return (correlator_at(d, beta, mid + h) - 2 * correlator_at(d, beta, mid)
                        + correlator_at(d, beta, mid - h)) / h ** 2

            # The bare O(h^2) error at h = beta/200 reaches (beta omega / 200)^2 / 12
            # for omega ~ 10; one Richardson step with h/2 removes it.
            h = beta / 200
            fd = (4 * second_difference(h / 2) - second_difference(h)) / 3
            assert curvature_at_midpoint(d, beta) == pytest.approx(fd, rel=1e-5)

    def test_nonnegative_and_empty(self):
        assert curvature_at_midpoint(single_peak(), 50.0) >= 0
        with pytest.raises(EmptyDensity):
            curvature_at_midpoint(SpectralDensity.from_peaks([]), 1.0)
