"""Parametric dephasing-noise spectra on log-spaced angular-frequency grids.

Unit conventions used throughout the package: angular frequency omega in
rad/us, time in us, spectral density S(omega) in rad^2/us.  With these
choices the decoherence exponent computed by the forward model is
dimensionless.

The spectrum family is a stitched three-segment shape: a white-noise
plateau at low frequency, a 1/omega section at intermediate frequency, and
a Lorentzian tail at high frequency.  Segments are blended with logistic
crossfades in log10(omega) so the result is smooth; segments with zero
amplitude are dropped from the stitch, so a single active segment covers
the whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

TWO_PI = 2.0 * math.pi

DEFAULT_OMEGA_MIN = TWO_PI * 1e-3  # 1 kHz expressed in rad/us
DEFAULT_OMEGA_MAX = TWO_PI * 1e2   # 100 MHz
DEFAULT_GRID_SIZE = 501
DEFAULT_SMOOTH_WIDTH = 0.3         # crossover width, decades

_MIN_EVAL_GRID = 8
_RATIO_TOL = 1e-12


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, log-spaced angular frequencies (rad/us)."""

    omegas: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        object.__setattr__(self, "omegas", omegas)
        if omegas.ndim != 1 or omegas.size < 2:
            raise ValueError("frequency grid needs at least 2 points")
        if not np.all(np.isfinite(omegas)) or omegas[0] <= 0.0:
            raise ValueError("frequencies must be finite and positive")
        if np.any(np.diff(omegas) <= 0.0):
            raise ValueError("frequencies must be strictly increasing")
        ratios = omegas[1:] / omegas[:-1]
        if np.max(np.abs(ratios / ratios[0] - 1.0)) > _RATIO_TOL:
            raise ValueError("grid is not log-spaced (non-constant ratio)")

    @property
    def count(self) -> int:
        return int(self.omegas.size)

    @property
    def omega_min(self) -> float:
        return float(self.omegas[0])

    @property
    def omega_max(self) -> float:
        return float(self.omegas[-1])

    def spec(self) -> tuple[float, float, int]:
        """(omega_min, omega_max, count) triple that regenerates the grid."""
        return (self.omega_min, self.omega_max, self.count)


def log_grid(omega_min: float = DEFAULT_OMEGA_MIN,
             omega_max: float = DEFAULT_OMEGA_MAX,
             count: int = DEFAULT_GRID_SIZE) -> FrequencyGrid:
    """Build a geometric frequency grid."""
    if omega_min <= 0 or omega_max <= omega_min:
        raise ValueError("need 0 < omega_min < omega_max")
    if count < 2:
        raise ValueError("count must be >= 2")
    return FrequencyGrid(np.geomspace(omega_min, omega_max, count))


def default_grid() -> FrequencyGrid:
    return log_grid()


@dataclass(frozen=True)
class SpectrumParams:
    """Generative parameters of the three-segment spectrum.

    a_white      white level (rad^2/us)
    a_oneoverf   1/omega amplitude; a_oneoverf/omega has units rad^2/us
    omega_c1     white -> 1/omega crossover (rad/us)
    a_lor        Lorentzian amplitude (rad^2/us)
    k_lor        Lorentzian rate (rad/us)
    omega_c2     1/omega -> Lorentzian crossover (rad/us)
    smooth_width crossover smoothing scale in decades
    """

    a_white: float
    a_oneoverf: float
    omega_c1: float
    a_lor: float
    k_lor: float
    omega_c2: float
    smooth_width: float = DEFAULT_SMOOTH_WIDTH

    def __post_init__(self):
        amps = (self.a_white, self.a_oneoverf, self.a_lor)
        vals = amps + (self.omega_c1, self.k_lor, self.omega_c2, self.smooth_width)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("spectrum parameters must be finite")
        if any(a < 0 for a in amps):
            raise ValueError("amplitudes must be non-negative")
        if self.omega_c1 <= 0 or self.omega_c2 <= 0:
            raise ValueError("crossovers must be positive")
        if not self.omega_c1 < self.omega_c2:
            raise ValueError("omega_c1 must be below omega_c2")
        if self.k_lor <= 0:
            raise ValueError("k_lor must be positive")
        if self.smooth_width <= 0:
            raise ValueError("smooth_width must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_white, self.a_oneoverf, self.omega_c1,
                         self.a_lor, self.k_lor, self.omega_c2,
                         self.smooth_width])


PARAM_NAMES = ("a_white", "a_oneoverf", "omega_c1", "a_lor", "k_lor",
               "omega_c2", "smooth_width")


def params_from_array(arr) -> SpectrumParams:
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (7,):
        raise ValueError("expected 7 parameter values")
    return SpectrumParams(*[float(v) for v in arr])


@dataclass(frozen=True)
class NoiseSpectrum:
    """Tabulated dephasing power spectral density on a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.count,):
            raise ValueError("spectrum length must match grid length")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        if np.any(values < 0.0):
            raise ValueError("spectrum values must be non-negative")


def evaluate_spectrum(params: SpectrumParams, grid: FrequencyGrid) -> NoiseSpectrum:
    """Evaluate the stitched three-segment spectrum on a grid.

    Active segments (amplitude > 0) are crossfaded left to right with
    logistic weights in log10(omega): the 1/omega section takes over at
    omega_c1 and the Lorentzian at omega_c2.  The blend is a convex
    combination, so the output is non-negative and monotone in each
    segment amplitude.
    """
    if grid.count < _MIN_EVAL_GRID:
        raise ValueError(f"grid too short for evaluation (< {_MIN_EVAL_GRID} points)")
    w = grid.omegas
    u = np.log10(w)

    segments: list[tuple[float | None, np.ndarray]] = []
    if params.a_white > 0:
        segments.append((None, np.full_like(w, params.a_white)))
    if params.a_oneoverf > 0:
        segments.append((params.omega_c1, params.a_oneoverf / w))
    if params.a_lor > 0:
        lor = params.a_lor * params.k_lor / (params.k_lor ** 2 + w ** 2)
        segments.append((params.omega_c2, lor))

    if not segments:
        return NoiseSpectrum(grid, np.zeros_like(w))

    values = segments[0][1]
    for crossover, seg in segments[1:]:
        g = expit((u - math.log10(crossover)) / params.smooth_width)
        values = (1.0 - g) * values + g * seg
    return NoiseSpectrum(grid, values)


# ---------------------------------------------------------------------------
# Parameter sampling

@dataclass(frozen=True)
class ParamBounds:
    """Per-parameter (min, max) ranges for log-uniform sampling."""

    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r}")
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"bounds for {name} must be finite")
            if lo <= 0 or hi <= 0:
                raise ValueError(f"bounds for {name} must be positive (log-uniform)")
            if lo > hi:
                raise ValueError(f"min > max for {name}")
        missing = [n for n in PARAM_NAMES if n not in self.ranges]
        if missing:
            raise ValueError(f"missing bounds for {', '.join(missing)}")

    def __getitem__(self, name: str) -> tuple[float, float]:
        return self.ranges[name]

    def with_range(self, name: str, lo: float, hi: float) -> "ParamBounds":
        updated = dict(self.ranges)
        updated[name] = (float(lo), float(hi))
        return ParamBounds(updated)


# Default sampling ranges keep every feature (crossovers, Lorentzian knee)
# inside the band the CPMG-32 forward model actually probes over 2..720 us,
# so sampled spectra remain identifiable from their coherence curves.
DEFAULT_BOUNDS = ParamBounds({
    "a_white": (1.5e-3, 2e-2),
    "a_oneoverf": (1e-4, 1e-1),
    "omega_c1": (TWO_PI * 2e-2, TWO_PI * 0.5),
    "a_lor": (1e-4, 1e1),
    "k_lor": (TWO_PI * 1e-1, TWO_PI * 2.0),
    "omega_c2": (TWO_PI * 2e-1, TWO_PI * 5.0),
    "smooth_width": (DEFAULT_SMOOTH_WIDTH, DEFAULT_SMOOTH_WIDTH),
})


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return lo
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_params(seed, bounds: ParamBounds = DEFAULT_BOUNDS,
                  tie_amplitudes: bool = True) -> SpectrumParams:
    """Draw one random parameter set, log-uniform per parameter.

    omega_c2 is drawn from its range conditioned on exceeding omega_c1
    (the exact limit of redrawing it until the ordering holds), which
    leaves the omega_c1 marginal log-uniform.  With tie_amplitudes (the
    default) the 1/omega and Lorentzian amplitudes are matched to the
    neighbouring segment at each crossover instead of being sampled,
    which keeps the stitched spectrum continuous before smoothing.
    """
    rng = np.random.default_rng(seed)
    a_white = _log_uniform(rng, *bounds["a_white"])
    omega_c1 = _log_uniform(rng, *bounds["omega_c1"])
    c2_lo, c2_hi = bounds["omega_c2"]
    if omega_c1 >= c2_hi:
        raise ValueError("omega_c1 drew above the omega_c2 range; check bounds")
    omega_c2 = _log_uniform(rng, max(c2_lo, omega_c1), c2_hi)
    if omega_c2 <= omega_c1:  # conditional range collapsed to float width
        omega_c2 = float(np.nextafter(omega_c1, np.inf))
    k_lor = _log_uniform(rng, *bounds["k_lor"])
    smooth_width = _log_uniform(rng, *bounds["smooth_width"])
    if tie_amplitudes:
        a_oneoverf = a_white * omega_c1
        a_lor = a_oneoverf * (k_lor ** 2 + omega_c2 ** 2) / (k_lor * omega_c2)
    else:
        a_oneoverf = _log_uniform(rng, *bounds["a_oneoverf"])
        a_lor = _log_uniform(rng, *bounds["a_lor"])
    return SpectrumParams(a_white=a_white, a_oneoverf=a_oneoverf,
                          omega_c1=omega_c1, a_lor=a_lor, k_lor=k_lor,
                          omega_c2=omega_c2, smooth_width=smooth_width)


def tie_derived_params(a_white: float, omega_c1: float, omega_c2: float,
                       k_lor: float, smooth_width: float = DEFAULT_SMOOTH_WIDTH) -> SpectrumParams:
    """Build a parameter set from the four free knobs of the tied family."""
    a_oneoverf = a_white * omega_c1
    a_lor = a_oneoverf * (k_lor ** 2 + omega_c2 ** 2) / (k_lor * omega_c2)
    return SpectrumParams(a_white=a_white, a_oneoverf=a_oneoverf,
                          omega_c1=omega_c1, a_lor=a_lor, k_lor=k_lor,
                          omega_c2=omega_c2, smooth_width=smooth_width)


# ---------------------------------------------------------------------------
# Plain-text I/O

def load_bounds(path, defaults: ParamBounds = DEFAULT_BOUNDS) -> ParamBounds:
    """Read a key/value bounds file with one name.min / name.max pair per line.

    Parameters not mentioned in the file keep their default range.
    """
    ranges = {name: list(rng) for name, rng in defaults.ranges.items()}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if "." not in key:
                raise ValueError(f"{path}:{lineno}: expected name.min or name.max")
            name, _, which = key.rpartition(".")
            if name not in PARAM_NAMES or which not in ("min", "max"):
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                num = float(value.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad number {value!r}") from exc
            ranges[name][0 if which == "min" else 1] = num
            seen.add(key)
    return ParamBounds({name: (lo, hi) for name, (lo, hi) in ranges.items()})


def save_bounds(bounds: ParamBounds, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in PARAM_NAMES:
            lo, hi = bounds[name]
            fh.write(f"{name}.min={lo:.17g}\n")
            fh.write(f"{name}.max={hi:.17g}\n")


def write_spectrum_csv(spectrum: NoiseSpectrum, path) -> None:
    """Two-column CSV export: omega_rad_per_us, S."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("omega_rad_per_us,S\n")
        for w, s in zip(spectrum.grid.omegas, spectrum.values):
            fh.write(f"{w:.17g},{s:.17g}\n")


def read_spectrum_csv(path) -> NoiseSpectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    return NoiseSpectrum(FrequencyGrid(data[:, 0]), data[:, 1])
