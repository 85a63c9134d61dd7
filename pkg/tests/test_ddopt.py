import numpy as np
import pytest

from noisespec.ddopt import (DDProblem, DDSolution, _ExponentModel,
                             coherence_improvement_scan, exponent_gradient,
                             optimize_sequence, write_improvement_csv)
from noisespec.pulses import cpmg_sequence
from noisespec.spectra import (NoiseSpectrum, TWO_PI, default_grid,
                               evaluate_spectrum, log_grid, sample_params,
                               tie_derived_params)


def wide_white(level=0.01):
    # spans the filter support so the sum rule holds on-grid to ~1e-4,
    # leaving no placement-dependent mass for the optimizer to exploit
    grid = log_grid(1e-7, 3e3, 501)
    return NoiseSpectrum(grid, np.full(501, level))


def planted_line(n, total_time, base=1e-4, strength=0.02, width_factor=10.0):
    grid = default_grid()
    center = np.pi * n / total_time
    width = center / width_factor
    vals = base + strength * width ** 2 / (width ** 2 + (grid.omegas - center) ** 2)
    return NoiseSpectrum(grid, vals)


class TestGradient:
    def test_matches_central_finite_differences(self):
        # 50 random problems, step 1e-5 us, tolerance 1e-4 relative
        grid = log_grid(TWO_PI * 1e-3, TWO_PI * 1e2, 201)
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 50:
            spec = evaluate_spectrum(sample_params(int(rng.integers(1000))), grid)
            n = int(rng.integers(1, 9))
            total = float(rng.uniform(20.0, 400.0))
            base = cpmg_sequence(n, total).pulse_times
            times = np.sort(base + rng.uniform(-0.2, 0.2, n) * total / (4 * n))
            model = _ExponentModel(spec, total, n)
            _, grad = model.chi_and_grad(times)
            step = 1e-5
            for j in range(n):
                up = times.copy()
                up[j] += step
                down = times.copy()
                down[j] -= step
                numeric = (model.chi(up) - model.chi(down)) / (2 * step)
                if max(abs(numeric), abs(grad[j])) < 1e-12:
                    continue
                assert abs(grad[j] - numeric) <= 1e-4 * max(abs(numeric),
                                                            abs(grad[j]))
                checked += 1

    def test_white_gradient_near_zero(self):
        spec = wide_white()
        seq = cpmg_sequence(4, 50.0)
        grad = exponent_gradient(spec, seq)
        chi = _ExponentModel(spec, 50.0, 4).chi(seq.pulse_times)
        assert np.max(np.abs(grad)) * 1.0 < 1e-3 * chi  # per-us change tiny

    def test_cpmg_gradient_antisymmetry(self):
        # symmetric spectrum + symmetric placement: gradient is odd under
        # reflecting the pulse index
        grid = default_grid()
        spec = evaluate_spectrum(sample_params(3), grid)
        seq = cpmg_sequence(6, 120.0)
        grad = exponent_gradient(spec, seq)
        assert np.allclose(grad, -grad[::-1], atol=1e-10 * max(1.0, np.max(np.abs(grad))))


class TestOptimize:
    def test_white_null_result(self):
        spec = wide_white()
        for n in (1, 2, 4, 8):
            sol = optimize_sequence(DDProblem(spec, n, 50.0))
            assert abs(sol.improvement_pct) <= 0.5
            assert sol.chi_optimized <= sol.chi_cpmg + 1e-9

    def test_single_pulse_pink_noise_midpoint(self):
        # 1-d grid-search oracle over the pulse position
        grid = default_grid()
        spec = NoiseSpectrum(grid, 2e-3 / grid.omegas)
        total = 60.0
        sol = optimize_sequence(DDProblem(spec, 1, total))
        model = _ExponentModel(spec, total, 1)
        positions = np.linspace(0.5, total - 0.5, 401)
        chis = [model.chi(np.array([p])) for p in positions]
        best = positions[int(np.argmin(chis))]
        assert abs(best - total / 2.0) < 0.01 * total  # oracle agrees with midpoint
        assert abs(sol.sequence.pulse_times[0] - total / 2.0) < 0.01 * total

    def test_planted_line_beats_cpmg_and_random_search(self):
        total = 100.0
        spec = planted_line(8, total)
        sol = optimize_sequence(DDProblem(spec, 8, total))
        assert sol.chi_optimized <= 0.9 * sol.chi_cpmg
        model = _ExponentModel(spec, total, 8)
        rng = np.random.default_rng(0)
        gap = 0.048
        best_random = np.inf
        for _ in range(10_000):
            u = np.sort(rng.uniform(0.0, 1.0, 8))
            times = gap / 2 + u * (total - gap) - gap / 2 * 0
            times = np.clip(times, gap / 2, total - gap / 2)
            if np.any(np.diff(times) < gap):
                continue
            best_random = min(best_random, model.chi(times))
        assert sol.chi_optimized <= best_random + 1e-12

    def test_constraints_satisfied(self):
        total = 30.0
        spec = planted_line(4, total, strength=0.05)
        problem = DDProblem(spec, 4, total, min_gap=0.5)
        sol = optimize_sequence(problem)
        times = sol.sequence.pulse_times
        assert times[0] >= 0.25 - 1e-9
        assert np.all(np.diff(times) >= 0.5 - 1e-9)
        assert total - times[-1] >= 0.25 - 1e-9

    def test_scale_invariant_argmin(self):
        total = 80.0
        spec = planted_line(4, total)
        scaled = NoiseSpectrum(spec.grid, 37.0 * spec.values)
        a = optimize_sequence(DDProblem(spec, 4, total))
        b = optimize_sequence(DDProblem(scaled, 4, total))
        assert np.allclose(a.sequence.pulse_times, b.sequence.pulse_times,
                           atol=1e-9)
        assert b.chi_optimized == pytest.approx(37.0 * a.chi_optimized,
                                                rel=1e-9)

    def test_infeasible_problem_rejected(self):
        spec = wide_white()
        with pytest.raises(ValueError):
            DDProblem(spec, 100, 1.0, min_gap=0.048)


class TestScan:
    def test_white_scan_near_zero(self):
        spec = wide_white()
        times = np.array([20.0, 50.0])
        scan = coherence_improvement_scan(spec, [1, 4], times)
        for values in scan.values():
            assert np.nanmax(np.abs(values)) <= 0.5

    def test_pink_scan_structure(self):
        # 1/f-dominated noise: every curve starts near zero at short times,
        # the moderate pulse count gains most at mid times, and the larger
        # count's gain peaks later
        grid = default_grid()
        spec = NoiseSpectrum(grid, 2e-3 / grid.omegas)
        times = np.geomspace(5.0, 400.0, 8)
        scan = coherence_improvement_scan(spec, [4, 16], times)
        assert abs(scan[4][0]) < 0.5 and abs(scan[16][0]) < 0.5
        mid = len(times) // 2 + 1
        assert scan[4][mid] > scan[16][mid]
        assert np.nanargmax(scan[16]) >= np.nanargmax(scan[4])

    def test_infeasible_cells_are_nan(self):
        spec = wide_white()
        scan = coherence_improvement_scan(spec, [8], np.array([0.3, 20.0]),
                                          min_gap=0.048)
        assert np.isnan(scan[8][0]) and np.isfinite(scan[8][1])

    def test_csv_output(self, tmp_path):
        spec = wide_white()
        times = np.array([20.0, 50.0])
        scan = coherence_improvement_scan(spec, [1], times)
        path = tmp_path / "improvement.csv"
        write_improvement_csv(scan, times, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t_us,n,improvement_pct"
        assert len(lines) == 3
