"""Pi-pulse sequences and their dephasing filter functions.

The instantaneous-pulse model is used throughout: the recorded pulse
width only enters as a spacing constraint, never as a shape correction.
For a sequence of n pulses at times t_1 < ... < t_n inside [0, T] the
filter function is

    F(w) = | 1 + (-1)^(n+1) exp(i w T) + 2 sum_j (-1)^j exp(i w t_j) |^2

which reduces to 4 sin^2(wT/2) for free evolution and vanishes at w -> 0
for any pulse count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectra import FrequencyGrid

_CHUNK = 262144


@dataclass(frozen=True)
class PulseSequence:
    """Total evolution time plus ordered pi-pulse centre times (us)."""

    total_time: float
    pulse_times: np.ndarray
    pulse_width: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.pulse_times, dtype=float)
        object.__setattr__(self, "pulse_times", times)
        if not (np.isfinite(self.total_time) and self.total_time > 0):
            raise ValueError("total_time must be positive")
        if self.pulse_width < 0:
            raise ValueError("pulse_width must be >= 0")
        if times.ndim != 1:
            raise ValueError("pulse_times must be one-dimensional")
        if times.size:
            if times[0] <= 0 or times[-1] >= self.total_time:
                raise ValueError("pulses must lie strictly inside (0, total_time)")
            if np.any(np.diff(times) <= 0):
                raise ValueError("pulse times must be strictly increasing")
            if self.pulse_width > 0 and times.size > 1:
                if np.min(np.diff(times)) < self.pulse_width - 1e-12:
                    raise ValueError("adjacent pulses closer than pulse_width")

    @property
    def n_pulses(self) -> int:
        return int(self.pulse_times.size)

    def reversed(self) -> "PulseSequence":
        """Time-reversed sequence t_j -> T - t_{n+1-j}."""
        return PulseSequence(self.total_time,
                             self.total_time - self.pulse_times[::-1],
                             self.pulse_width)


def cpmg_sequence(n: int, total_time: float, pulse_width: float = 0.0) -> PulseSequence:
    """Equally spaced n-pulse sequence with t_j = T (j - 1/2) / n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    j = np.arange(1, n + 1, dtype=float)
    return PulseSequence(total_time, total_time * (j - 0.5) / n, pulse_width)


def toggling_coefficients(seq: PulseSequence) -> tuple[np.ndarray, np.ndarray]:
    """Event times and complex-sum coefficients defining the filter.

    Returns (taus, coeffs) with taus = [0, t_1, ..., t_n, T] and the
    matching coefficients [1, 2(-1)^1, ..., 2(-1)^n, (-1)^(n+1)].
    """
    n = seq.n_pulses
    taus = np.concatenate(([0.0], seq.pulse_times, [seq.total_time]))
    coeffs = np.empty(n + 2)
    coeffs[0] = 1.0
    coeffs[1:n + 1] = 2.0 * (-1.0) ** np.arange(1, n + 1)
    coeffs[n + 1] = (-1.0) ** (n + 1)
    return taus, coeffs


def filter_values(seq: PulseSequence, omegas: np.ndarray) -> np.ndarray:
    """Pointwise filter function F on arbitrary angular frequencies."""
    omegas = np.asarray(omegas, dtype=float)
    taus, coeffs = toggling_coefficients(seq)
    out = np.empty(omegas.shape)
    # chunked accumulation keeps memory flat for very dense grids
    for start in range(0, omegas.size, _CHUNK):
        w = omegas[start:start + _CHUNK]
        amp = np.zeros(w.shape, dtype=complex)
        for tau, c in zip(taus, coeffs):
            amp += c * np.exp(1j * w * tau)
        out[start:start + _CHUNK] = np.abs(amp) ** 2
    return out


@dataclass(frozen=True)
class FilterCurve:
    """Filter function evaluated on a frequency grid (dimensionless)."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.count,):
            raise ValueError("filter length must match grid length")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("filter values must be finite and non-negative")


def filter_function(seq: PulseSequence, grid: FrequencyGrid) -> FilterCurve:
    """Evaluate F on a frequency grid."""
    return FilterCurve(grid, filter_values(seq, grid.omegas))


# ---------------------------------------------------------------------------
# One-line serialization: "t_total; t_1,t_2,...,t_n; tau_pi"

def sequence_to_line(seq: PulseSequence) -> str:
    times = ",".join(f"{t:.17g}" for t in seq.pulse_times)
    return f"{seq.total_time:.17g}; {times}; {seq.pulse_width:.17g}"


def sequence_from_line(line: str) -> PulseSequence:
    parts = line.strip().split(";")
    if len(parts) != 3:
        raise ValueError("expected 't_total; t_1,...,t_n; tau_pi'")
    total = float(parts[0])
    times_part = parts[1].strip()
    if times_part:
        times = np.array([float(tok) for tok in times_part.split(",")])
    else:
        times = np.array([])
    width = float(parts[2])
    return PulseSequence(total, times, width)
