"""Dephasing-noise spectroscopy workbench.

Synthesizes qubit dephasing spectra and coherence decays through the
filter-function overlap integral, inverts measured coherence curves to
noise spectra with a 1-d convolutional network (plus a derivative-free
classical baseline), and designs pulse timings that minimize the
decoherence exponent against a given spectrum.
"""

from .spectra import (
    FrequencyGrid, SpectrumParams, NoiseSpectrum, ParamBounds,
    DEFAULT_BOUNDS, DEFAULT_GRID_SIZE, DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX,
    default_grid, log_grid, evaluate_spectrum, sample_params,
    tie_derived_params, load_bounds, save_bounds,
    read_spectrum_csv, write_spectrum_csv,
)
from .pulses import (
    PulseSequence, FilterCurve, cpmg_sequence, filter_function,
    filter_values, sequence_to_line, sequence_from_line,
)
from .forward import (
    CoherenceCurve, CpmgFamily, StretchedExpFit, CurveSynthesizer,
    SpanCoverageWarning, FitError, DEFAULT_PULSE_WIDTH,
    default_time_grid, decoherence_exponent, coherence_curve,
    add_experimental_noise, fit_stretched_exponential,
    read_curve_csv, write_curve_csv,
)
from .kraus import (
    apply_amplitude_damping, apply_phase_damping, evolve_noisy,
    amplitude_damping_kraus, phase_damping_kraus, validate_density_matrix,
    pure_state, rho_to_csv_row, rho_from_csv_row, KET0, KET1, PLUS,
)

__version__ = "0.1.0"
