import numpy as np
import pytest

from noisespec.forward import CoherenceCurve, CpmgFamily, CurveSynthesizer
from noisespec.measured import (ChannelNormalization, MeasuredRun,
                                MeasurementError, dephasing_curve,
                                read_run_csv, resample_curve, synthetic_run,
                                write_run_csv)
from noisespec.spectra import NoiseSpectrum, default_grid


def exp_run(gamma1, gamma_phi, times, **kwargs):
    p1 = np.exp(-gamma1 * times)
    gamma2 = gamma1 / 2.0 + gamma_phi
    p0 = 0.5 + 0.5 * np.exp(-gamma2 * times)
    return MeasuredRun(times=times, p1_t1=p1, p0_t2=p0, **kwargs)


class TestDephasingCurve:
    def test_unit_denominator(self):
        times = np.geomspace(2.0, 300.0, 40)
        gamma2 = 1.0 / 120.0
        run = MeasuredRun(times=times, p1_t1=np.ones_like(times),
                          p0_t2=0.5 + 0.5 * np.exp(-gamma2 * times))
        curve = dephasing_curve(run)
        assert np.allclose(curve.values, np.exp(-gamma2 * times), rtol=1e-12)

    def test_relaxation_cancellation(self):
        # with G2 = G1/2 + Gphi the extracted curve is exp(-Gphi t)
        times = np.geomspace(2.0, 400.0, 60)
        gamma1, gamma_phi = 1.0 / 150.0, 1.0 / 200.0
        curve = dephasing_curve(exp_run(gamma1, gamma_phi, times))
        assert np.allclose(curve.values, np.exp(-gamma_phi * times),
                           rtol=1e-10)

    def test_shot_noise_envelope(self):
        # Monte-Carlo: pointwise recovery within 3 sigma of propagated noise
        grid = default_grid()
        spectrum = NoiseSpectrum(grid, np.full(501, 0.003))
        times = np.geomspace(2.0, 300.0, 50)
        synth = CurveSynthesizer(grid, CpmgFamily(32), times)
        truth = np.exp(-synth.exponents(spectrum))
        gamma1 = 1.0 / 400.0
        worst = 0
        for seed in range(20):
            run = synthetic_run(spectrum, gamma1, times, shots=4000,
                                seed=seed, synth=synth)
            curve = dephasing_curve(run)
            # sigma of C: from p0 (scaled by 2/sqrt(D1)) and p1 channels
            p1 = np.exp(-gamma1 * times)
            sig_p = np.sqrt(0.25 / 4000)
            sig_c = 2.0 * sig_p / np.sqrt(p1) * np.sqrt(1.0 + 0.25 * curve.values ** 2)
            worst = max(worst, int(np.sum(np.abs(curve.values - truth) > 3 * sig_c)))
        assert worst <= 2  # ~0.3% two-sided outlier rate, 50 points/run

    def test_drop_and_failure_thresholds(self):
        times = np.geomspace(1.0, 100.0, 20)
        p1 = np.full(20, 0.5)
        p1[-3:] = 0.01  # below the usable floor
        run = MeasuredRun(times=times, p1_t1=p1, p0_t2=np.full(20, 0.9))
        with pytest.warns(UserWarning, match="dropped 3"):
            curve = dephasing_curve(run)
        assert curve.times.size == 17
        p1_bad = np.full(20, 0.01)
        with pytest.raises(MeasurementError):
            dephasing_curve(MeasuredRun(times=times, p1_t1=p1_bad,
                                        p0_t2=np.full(20, 0.9)))

    def test_baseline_exchange_invariance(self):
        # moving the readout baseline to the other channel is undone by
        # matching per-channel affine maps
        times = np.geomspace(2.0, 200.0, 30)
        gamma1, gamma_phi = 1.0 / 100.0, 1.0 / 80.0
        d1 = np.exp(-gamma1 * times)
        d2 = np.exp(-(gamma1 / 2.0 + gamma_phi) * times)
        run_a = MeasuredRun(times=times, p1_t1=d1, p0_t2=0.5 + 0.5 * d2)
        curve_a = dephasing_curve(run_a)
        run_b = MeasuredRun(times=times, p1_t1=0.6 * d1 + 0.2,
                            p0_t2=0.8 * d2 + 0.1)
        curve_b = dephasing_curve(
            run_b,
            t1_norm=ChannelNormalization(baseline=0.2, scale=0.6),
            t2_norm=ChannelNormalization(baseline=0.1, scale=0.8))
        assert np.allclose(curve_a.values, curve_b.values, rtol=1e-12)


class TestResample:
    def test_identity_when_grids_match(self):
        times = np.geomspace(2.0, 720.0, 150)
        curve = CoherenceCurve(times, np.exp(-times / 100.0))
        assert resample_curve(curve, times) is curve

    def test_monotone_cubic_accuracy(self):
        src = np.geomspace(1.5, 800.0, 300)
        curve = CoherenceCurve(src, np.exp(-(src / 90.0) ** 1.4))
        target = np.geomspace(2.0, 720.0, 150)
        resampled = resample_curve(curve, target)
        assert np.allclose(resampled.values, np.exp(-(target / 90.0) ** 1.4),
                           atol=1e-6)

    def test_extrapolation_refused(self):
        src = np.geomspace(5.0, 500.0, 100)
        curve = CoherenceCurve(src, np.exp(-src / 100.0))
        with pytest.raises(MeasurementError):
            resample_curve(curve, np.geomspace(2.0, 720.0, 150))


class TestRunCsv:
    def test_round_trip_with_metadata(self, tmp_path):
        times = np.geomspace(2.0, 300.0, 25)
        run = exp_run(1e-3, 2e-3, times, shots=4000, qubit_label="q7",
                      timestamp="2024-05-01T12:00:00")
        path = tmp_path / "run.csv"
        write_run_csv(run, path)
        loaded = read_run_csv(path)
        assert loaded.shots == 4000
        assert loaded.qubit_label == "q7"
        assert loaded.timestamp == "2024-05-01T12:00:00"
        assert np.array_equal(loaded.times, run.times)
        assert np.array_equal(loaded.p1_t1, run.p1_t1)
        assert np.array_equal(loaded.p0_t2, run.p0_t2)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,p,q\n1,2,3\n")
        with pytest.raises(MeasurementError):
            read_run_csv(path)


class TestValidation:
    def test_probability_range_enforced(self):
        times = np.array([1.0, 2.0])
        with pytest.raises(ValueError):
            MeasuredRun(times=times, p1_t1=np.array([0.5, 1.5]),
                        p0_t2=np.array([0.5, 0.5]))

    def test_time_grid_enforced(self):
        with pytest.raises(ValueError):
            MeasuredRun(times=np.array([2.0, 1.0]),
                        p1_t1=np.array([0.5, 0.5]),
                        p0_t2=np.array([0.5, 0.5]))
