import numpy as np
import pytest

from noisespec.forward import (CoherenceCurve, CpmgFamily, CurveSynthesizer,
                               FitError, SpanCoverageWarning,
                               add_experimental_noise, coherence_curve,
                               decoherence_exponent, default_time_grid,
                               fit_stretched_exponential, read_curve_csv,
                               write_curve_csv)
from noisespec.pulses import PulseSequence, cpmg_sequence
from noisespec.spectra import (NoiseSpectrum, TWO_PI, default_grid,
                               evaluate_spectrum, log_grid, sample_params)


def white_spectrum(level, grid):
    return NoiseSpectrum(grid, np.full(grid.count, level))


def wide_grid_for(n, t, tail_fraction=2e-4):
    """Grid spanning the filter support tightly enough for sum-rule checks."""
    omega_top = (4 * n + 2) / (np.pi * t * tail_fraction)
    omega_bottom = min(2e-4 / t, omega_top * 1e-9)
    return log_grid(omega_bottom, omega_top, 501)


class TestExponent:
    def test_zero_spectrum_gives_zero(self):
        spec = NoiseSpectrum(default_grid(), np.zeros(501))
        seq = cpmg_sequence(4, 50.0)
        assert decoherence_exponent(spec, seq, warn_span=False) == 0.0

    def test_white_matches_sum_rule(self):
        # S0 * t closed form; grid sized so the filter support is covered
        s0, t = 0.05, 10.0
        for n in (0, 1, 8, 32):
            grid = wide_grid_for(max(n, 1), t)
            spec = white_spectrum(s0, grid)
            seq = (PulseSequence(t, np.array([])) if n == 0
                   else cpmg_sequence(n, t))
            chi = decoherence_exponent(spec, seq, warn_span=False)
            assert chi == pytest.approx(s0 * t, rel=1e-3)

    def test_one_over_f_hahn_gaussian_slope(self):
        grid = default_grid()
        spec = NoiseSpectrum(grid, 1e-3 / grid.omegas)
        times = np.geomspace(2.0, 100.0, 20)
        chis = [decoherence_exponent(spec, cpmg_sequence(1, float(t)),
                                     warn_span=False) for t in times]
        slope = np.polyfit(np.log(times), np.log(chis), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.05)

    def test_additivity(self):
        grid = default_grid()
        s1 = evaluate_spectrum(sample_params(11), grid)
        s2 = evaluate_spectrum(sample_params(22), grid)
        seq = cpmg_sequence(32, 300.0)
        chi1 = decoherence_exponent(s1, seq, warn_span=False)
        chi2 = decoherence_exponent(s2, seq, warn_span=False)
        both = NoiseSpectrum(grid, s1.values + s2.values)
        total = decoherence_exponent(both, seq, warn_span=False)
        assert total == pytest.approx(chi1 + chi2, rel=1e-12)

    def test_scaling(self):
        grid = default_grid()
        spec = evaluate_spectrum(sample_params(4), grid)
        seq = cpmg_sequence(16, 120.0)
        chi = decoherence_exponent(spec, seq, warn_span=False)
        scaled = NoiseSpectrum(grid, 3.5 * spec.values)
        assert decoherence_exponent(scaled, seq, warn_span=False) == \
            pytest.approx(3.5 * chi, rel=1e-12)

    def test_quadrature_density_convergence(self):
        coarse = default_grid()
        fine = log_grid(coarse.omega_min, coarse.omega_max, 1001)
        for seed in range(10):
            params = sample_params(seed)
            for t in (2.0, 50.0, 720.0):
                seq = cpmg_sequence(32, t)
                a = decoherence_exponent(evaluate_spectrum(params, coarse),
                                         seq, warn_span=False)
                b = decoherence_exponent(evaluate_spectrum(params, fine),
                                         seq, warn_span=False)
                assert abs(b - a) < 1e-4 * abs(a)

    def test_span_warning_on_narrow_grid(self):
        narrow = log_grid(TWO_PI * 0.1, TWO_PI * 1.0, 64)
        spec = white_spectrum(0.01, narrow)
        with pytest.warns(SpanCoverageWarning):
            decoherence_exponent(spec, cpmg_sequence(4, 50.0))


class TestCoherenceCurve:
    def test_definitional_consistency_with_exponent(self):
        grid = default_grid()
        spec = evaluate_spectrum(sample_params(2), grid)
        times = default_time_grid()
        family = CpmgFamily(32)
        curve = coherence_curve(spec, family, times, warn_span=False)
        chi0 = decoherence_exponent(spec, family(float(times[0])),
                                    warn_span=False)
        assert curve.values[0] == pytest.approx(np.exp(-chi0), rel=1e-14)

    def test_white_cpmg32_exponential(self):
        t = default_time_grid()
        grid = wide_grid_for(32, float(t[0]))
        spec = white_spectrum(0.01, grid)
        curve = coherence_curve(spec, CpmgFamily(32), t, warn_span=False)
        assert np.allclose(curve.values, np.exp(-0.01 * t), rtol=1e-3)

    def test_monotone_nonincreasing_over_sampled_spectra(self):
        grid = default_grid()
        synth = CurveSynthesizer(grid, CpmgFamily(32), default_time_grid())
        for seed in range(1000):
            spec = evaluate_spectrum(sample_params(seed), grid)
            values = synth.clean_curve(spec).values
            assert np.all(np.diff(values) <= 1e-9)
            assert values[0] <= 1.0 and values[-1] > 0.0

    def test_times_must_increase(self):
        with pytest.raises(ValueError):
            CoherenceCurve(np.array([2.0, 1.0]), np.array([1.0, 1.0]))


class TestExperimentalNoise:
    def test_zero_sigma_identity(self):
        curve = CoherenceCurve(np.array([1.0, 2.0]), np.array([0.9, 0.8]))
        noisy = add_experimental_noise(curve, 0.0, seed=5)
        assert np.array_equal(noisy.values, curve.values)
        assert noisy.noise_sigma == 0.0

    def test_deterministic_per_seed(self):
        curve = CoherenceCurve(np.array([1.0, 2.0, 3.0]),
                               np.array([1.0, 0.9, 0.8]))
        a = add_experimental_noise(curve, 0.05, seed=11)
        b = add_experimental_noise(curve, 0.05, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_moment_check(self):
        # Monte-Carlo: per-point std of replicated noise matches sigma
        times = np.arange(1.0, 21.0)
        curve = CoherenceCurve(times, np.full(20, 0.5))
        draws = np.array([add_experimental_noise(curve, 0.03, seed=s).values
                          for s in range(10_000)])
        stds = draws.std(axis=0)
        assert np.all(np.abs(stds - 0.03) < 0.001)

    def test_not_clamped(self):
        curve = CoherenceCurve(np.array([1.0, 2.0]), np.array([1.0, 0.0]))
        noisy = add_experimental_noise(curve, 0.5, seed=3)
        assert noisy.values.max() > 1.0 or noisy.values.min() < 0.0


class TestStretchedExponentialFit:
    def test_recovers_generating_parameters(self):
        t = np.geomspace(2.0, 720.0, 50)
        curve = CoherenceCurve(t, np.exp(-(t / 100.0) ** 1.3))
        fit = fit_stretched_exponential(curve)
        assert fit.t_phi == pytest.approx(100.0, abs=0.5)
        assert fit.p == pytest.approx(1.3, abs=0.01)
        assert fit.residual < 1e-9

    def test_pure_exponential_gives_unit_exponent(self):
        t = np.geomspace(1.0, 300.0, 40)
        curve = CoherenceCurve(t, np.exp(-t / 50.0))
        fit = fit_stretched_exponential(curve)
        assert fit.p == pytest.approx(1.0, abs=0.01)

    def test_regime_exponents_from_forward_model(self):
        grid = default_grid()
        times = default_time_grid()
        white = white_spectrum(0.01, grid)
        curve = coherence_curve(white, CpmgFamily(32), times, warn_span=False)
        assert fit_stretched_exponential(curve).p == pytest.approx(1.0, abs=0.1)
        pink = NoiseSpectrum(grid, 2e-3 / grid.omegas)
        curve = coherence_curve(pink, CpmgFamily(1), times, warn_span=False)
        assert fit_stretched_exponential(curve).p == pytest.approx(2.0, abs=0.2)

    def test_rejects_non_decaying(self):
        t = np.arange(1.0, 21.0)
        with pytest.raises(FitError):
            fit_stretched_exponential(CoherenceCurve(t, np.full(20, 1.2)))

    def test_rejects_too_few_points(self):
        t = np.arange(1.0, 5.0)
        with pytest.raises(FitError):
            fit_stretched_exponential(CoherenceCurve(t, np.full(4, 0.5)))


class TestCurveCsv:
    def test_round_trip(self, tmp_path):
        t = default_time_grid()
        curve = CoherenceCurve(t, np.exp(-t / 100.0), 0.02)
        path = tmp_path / "curve.csv"
        write_curve_csv(curve, path)
        loaded = read_curve_csv(path, noise_sigma=0.02)
        assert np.array_equal(loaded.times, curve.times)
        assert np.array_equal(loaded.values, curve.values)
