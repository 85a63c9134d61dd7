import numpy as np
import pytest

from noisespec.classical import (FitResult, _random_init, invert_classical)
from noisespec.forward import CoherenceCurve, CpmgFamily, CurveSynthesizer
from noisespec.spectra import (DEFAULT_BOUNDS, SpectrumParams, default_grid,
                               evaluate_spectrum, sample_params,
                               tie_derived_params)


@pytest.fixture(scope="module")
def synth():
    times = np.geomspace(2.0, 720.0, 150)
    return CurveSynthesizer(default_grid(), CpmgFamily(32), times)


def curve_of(params, synth):
    spectrum = evaluate_spectrum(params, synth.grid)
    return CoherenceCurve(synth.times, np.exp(-synth.exponents(spectrum)))


class TestInvertClassical:
    def test_fixed_point_at_truth(self, synth):
        params = sample_params(21)
        curve = curve_of(params, synth)
        fit = invert_classical(curve, CpmgFamily(32), params, budget=400,
                               synth=synth)
        assert fit.objective < 1e-6
        for name in ("a_white", "omega_c1", "omega_c2", "k_lor"):
            assert getattr(fit.params, name) == pytest.approx(
                getattr(params, name), rel=1e-4)

    def test_recovers_from_perturbed_amplitudes(self, synth):
        # noiseless curve, every amplitude off by 3x, cutoffs true; bounds
        # widened so the perturbed start is an admissible initial guess
        wide = (DEFAULT_BOUNDS.with_range("a_white", 1e-4, 1e-1)
                .with_range("a_oneoverf", 1e-5, 1.0)
                .with_range("a_lor", 1e-5, 1e2))
        for seed in (33, 57):
            params = sample_params(seed)
            curve = curve_of(params, synth)
            init = SpectrumParams(a_white=params.a_white * 3.0,
                                  a_oneoverf=params.a_oneoverf * 3.0,
                                  omega_c1=params.omega_c1,
                                  a_lor=params.a_lor * 3.0,
                                  k_lor=params.k_lor,
                                  omega_c2=params.omega_c2,
                                  smooth_width=params.smooth_width)
            fit = invert_classical(curve, CpmgFamily(32), init, budget=4000,
                                   bounds=wide, synth=synth)
            truth = evaluate_spectrum(params, synth.grid).values
            model = evaluate_spectrum(fit.params, synth.grid).values
            mean_rel = float(np.mean(np.abs(model - truth) / truth))
            assert mean_rel < 0.05

    def test_deep_convergence_from_adjacent_init(self, synth):
        # noiseless data, nearly-true start, generous budget
        params = tie_derived_params(5e-3, 0.4, 4.0, 1.0)
        curve = curve_of(params, synth)
        init = SpectrumParams(a_white=params.a_white * 1.01,
                              a_oneoverf=params.a_oneoverf * 1.01,
                              omega_c1=params.omega_c1,
                              a_lor=params.a_lor * 1.01,
                              k_lor=params.k_lor,
                              omega_c2=params.omega_c2,
                              smooth_width=params.smooth_width)
        fit = invert_classical(curve, CpmgFamily(32), init, budget=10_000,
                               synth=synth)
        assert fit.objective < 1e-8

    def test_monotone_improvement_over_incumbent(self, synth):
        params = sample_params(5)
        curve = curve_of(params, synth)
        rng = np.random.default_rng(0)
        for trial in range(5):
            init = _random_init(np.random.default_rng(trial), DEFAULT_BOUNDS,
                                tied=False)
            fit = invert_classical(curve, CpmgFamily(32), init, budget=60,
                                   synth=synth)
            init_spec = evaluate_spectrum(init, synth.grid)
            init_obj = float(np.sqrt(np.mean(
                (np.exp(-synth.exponents(init_spec)) - curve.values) ** 2)))
            assert fit.objective <= init_obj + 1e-12

    def test_params_stay_in_bounds(self, synth):
        params = sample_params(8)
        curve = curve_of(params, synth)
        init = _random_init(np.random.default_rng(2), DEFAULT_BOUNDS, tied=False)
        fit = invert_classical(curve, CpmgFamily(32), init, budget=150,
                               synth=synth)
        for name in ("a_white", "a_oneoverf", "omega_c1", "a_lor", "k_lor",
                     "omega_c2"):
            lo, hi = DEFAULT_BOUNDS[name]
            value = getattr(fit.params, name)
            assert lo * (1 - 1e-9) <= value <= hi * (1 + 1e-9)

    def test_budget_exhaustion_flagged_not_raised(self, synth):
        params = sample_params(13)
        curve = curve_of(params, synth)
        init = _random_init(np.random.default_rng(7), DEFAULT_BOUNDS, tied=False)
        fit = invert_classical(curve, CpmgFamily(32), init, budget=10,
                               synth=synth)
        assert isinstance(fit, FitResult)
        assert fit.n_evals >= 1

    def test_deterministic(self, synth):
        params = sample_params(44)
        curve = curve_of(params, synth)
        init = _random_init(np.random.default_rng(4), DEFAULT_BOUNDS, tied=False)
        a = invert_classical(curve, CpmgFamily(32), init, budget=80, synth=synth)
        b = invert_classical(curve, CpmgFamily(32), init, budget=80, synth=synth)
        assert a.params == b.params
        assert a.n_evals == b.n_evals

    def test_invalid_init_rejected(self, synth):
        params = sample_params(3)
        curve = curve_of(params, synth)
        outside = SpectrumParams(a_white=1e3, a_oneoverf=1.0, omega_c1=0.1,
                                 a_lor=1.0, k_lor=1.0, omega_c2=10.0)
        with pytest.raises(ValueError):
            invert_classical(curve, CpmgFamily(32), outside, synth=synth)
