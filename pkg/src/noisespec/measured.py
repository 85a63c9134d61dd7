"""Measured-run ingestion and time-dependent spectroscopy.

A run holds the excited-state survival probabilities of an energy-decay
experiment and the ground-state return probabilities of a multipulse
coherence experiment on a shared time grid.  The pure-dephasing curve is
built by normalizing each probability channel to its decay function with
an affine map and forming C(t) = D2(t) / sqrt(D1(t)); with default
normalizations (baseline 1/2 and scale 1/2 for the coherence channel,
identity for the decay channel) this cancels the energy-relaxation
contribution exactly.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .forward import CoherenceCurve, CpmgFamily, CurveSynthesizer
from .network import ModelWeights, predict
from .spectra import NoiseSpectrum

DEFAULT_SHOTS = 4000
_P1_FLOOR = 0.05
_PROB_LO, _PROB_HI = -0.1, 1.1


class MeasurementError(ValueError):
    """A measured run cannot be turned into a dephasing curve."""


@dataclass(frozen=True)
class ChannelNormalization:
    """Affine map from readout probability to decay function: D = (P - baseline) / scale."""

    baseline: float
    scale: float

    def apply(self, probs: np.ndarray) -> np.ndarray:
        if self.scale == 0:
            raise MeasurementError("channel normalization scale must be nonzero")
        return (probs - self.baseline) / self.scale


T1_NORMALIZATION = ChannelNormalization(baseline=0.0, scale=1.0)
T2_NORMALIZATION = ChannelNormalization(baseline=0.5, scale=0.5)


@dataclass(frozen=True)
class MeasuredRun:
    times: np.ndarray
    p1_t1: np.ndarray
    p0_t2: np.ndarray
    shots: int = DEFAULT_SHOTS
    qubit_label: str = ""
    timestamp: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        p1 = np.asarray(self.p1_t1, dtype=float)
        p0 = np.asarray(self.p0_t2, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p1_t1", p1)
        object.__setattr__(self, "p0_t2", p0)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1-d array")
        if times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be positive and strictly increasing")
        if p1.shape != times.shape or p0.shape != times.shape:
            raise ValueError("probability arrays must match the time grid")
        for name, arr in (("p1_t1", p1), ("p0_t2", p0)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            if np.any(arr < _PROB_LO) or np.any(arr > _PROB_HI):
                raise ValueError(f"{name} outside [{_PROB_LO}, {_PROB_HI}]")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


def dephasing_curve(run: MeasuredRun,
                    t1_norm: ChannelNormalization = T1_NORMALIZATION,
                    t2_norm: ChannelNormalization = T2_NORMALIZATION) -> CoherenceCurve:
    """Pure-dephasing decay C(t) = D2(t) / sqrt(D1(t)), clipped to (0, 1.2].

    Points where the decay channel has dropped to p1 <= 0.05 are removed
    (with a warning); losing more than half the points is an error.
    """
    keep = run.p1_t1 > _P1_FLOOR
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        if dropped > run.times.size / 2:
            raise MeasurementError(
                f"{dropped} of {run.times.size} points have p1 <= {_P1_FLOOR}")
        warnings.warn(f"dropped {dropped} points with p1 <= {_P1_FLOOR}",
                      stacklevel=2)
    d1 = t1_norm.apply(run.p1_t1[keep])
    d2 = t2_norm.apply(run.p0_t2[keep])
    if np.any(d1 <= 0):
        raise MeasurementError("decay channel non-positive after normalization")
    values = np.clip(d2 / np.sqrt(d1), 1e-12, 1.2)
    return CoherenceCurve(run.times[keep], values, 0.0)


def resample_curve(curve: CoherenceCurve, times: np.ndarray,
                   rel_tol: float = 1e-9) -> CoherenceCurve:
    """Monotone cubic resampling onto a target time grid.

    Returns the curve unchanged when the grids already agree to rel_tol.
    Extrapolation is refused: the target grid must lie inside the span of
    the measured one.
    """
    times = np.asarray(times, dtype=float)
    if curve.times.size == times.size and \
            np.max(np.abs(curve.times / times - 1.0)) <= rel_tol:
        return curve
    span_lo, span_hi = curve.times[0], curve.times[-1]
    pad = rel_tol * (span_hi - span_lo)
    if times[0] < span_lo - pad or times[-1] > span_hi + pad:
        raise MeasurementError(
            f"target grid [{times[0]:g}, {times[-1]:g}] extends beyond the "
            f"measured span [{span_lo:g}, {span_hi:g}]; refusing to extrapolate")
    interp = PchipInterpolator(curve.times, curve.values)
    clipped = np.clip(times, span_lo, span_hi)
    return CoherenceCurve(times, interp(clipped), curve.noise_sigma)


# ---------------------------------------------------------------------------
# Run CSV format: '# key: value' metadata lines, then time_us,p1_t1,p0_t2

def write_run_csv(run: MeasuredRun, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shots: {run.shots}\n")
        if run.qubit_label:
            fh.write(f"# qubit: {run.qubit_label}\n")
        if run.timestamp:
            fh.write(f"# timestamp: {run.timestamp}\n")
        fh.write("time_us,p1_t1,p0_t2\n")
        for t, a, b in zip(run.times, run.p1_t1, run.p0_t2):
            fh.write(f"{t:.17g},{a:.17g},{b:.17g}\n")


def read_run_csv(path) -> MeasuredRun:
    meta: dict[str, str] = {}
    rows: list[tuple[float, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line.replace(" ", "") != "time_us,p1_t1,p0_t2":
                    raise MeasurementError(f"{path}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise MeasurementError(f"{path}: expected 3 columns, got {line!r}")
            rows.append(tuple(float(p) for p in parts))
    if not rows:
        raise MeasurementError(f"{path}: no data rows")
    data = np.array(rows)
    return MeasuredRun(times=data[:, 0], p1_t1=data[:, 1], p0_t2=data[:, 2],
                       shots=int(meta.get("shots", DEFAULT_SHOTS)),
                       qubit_label=meta.get("qubit", ""),
                       timestamp=meta.get("timestamp", ""))


# ---------------------------------------------------------------------------
# Synthetic runs (validation and demos)

def synthetic_run(spectrum: NoiseSpectrum, gamma1: float, times: np.ndarray,
                  shots: int = DEFAULT_SHOTS, seed=0, cpmg_n: int = 32,
                  timestamp: str = "", qubit_label: str = "synthetic",
                  synth: CurveSynthesizer | None = None) -> MeasuredRun:
    """Simulate one paired decay/coherence acquisition with shot noise."""
    times = np.asarray(times, dtype=float)
    if synth is None:
        from .spectra import default_grid
        synth = CurveSynthesizer(spectrum.grid, CpmgFamily(cpmg_n), times)
    coherence = np.exp(-synth.exponents(spectrum))
    p1 = np.exp(-gamma1 * times)
    p0 = 0.5 + 0.5 * np.exp(-gamma1 * times / 2.0) * coherence
    rng = np.random.default_rng(seed)
    p1 = p1 + rng.normal(0.0, np.sqrt(np.maximum(p1 * (1 - p1), 1e-12) / shots))
    p0 = p0 + rng.normal(0.0, np.sqrt(np.maximum(p0 * (1 - p0), 1e-12) / shots))
    return MeasuredRun(times=times, p1_t1=np.clip(p1, _PROB_LO, _PROB_HI),
                       p0_t2=np.clip(p0, _PROB_LO, _PROB_HI), shots=shots,
                       qubit_label=qubit_label, timestamp=timestamp)


# ---------------------------------------------------------------------------
# Time series

@dataclass
class SeriesEntry:
    timestamp: str
    curve: CoherenceCurve          # on the model time grid
    spectrum: NoiseSpectrum        # network prediction


@dataclass
class SpectroscopySeries:
    entries: list[SeriesEntry] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)


def _timestamp_key(value: str):
    try:
        return (0, float(value))
    except ValueError:
        return (1, value)


def run_timeseries(runs: list[MeasuredRun], weights: ModelWeights,
                   t1_norm: ChannelNormalization = T1_NORMALIZATION,
                   t2_norm: ChannelNormalization = T2_NORMALIZATION,
                   threads: int = 1) -> SpectroscopySeries:
    """Process consecutive runs through dephasing extraction and prediction.

    Per-run failures are recorded and the series continues; output order
    always follows the input order.
    """
    if not runs:
        raise ValueError("need at least one run")
    keys = [_timestamp_key(r.timestamp) for r in runs]
    if any(b <= a for a, b in zip(keys, keys[1:])):
        raise ValueError("run timestamps must be strictly increasing")
    model_times = weights.time_grid()

    def process(run: MeasuredRun) -> SeriesEntry:
        curve = resample_curve(dephasing_curve(run, t1_norm, t2_norm),
                               model_times)
        return SeriesEntry(timestamp=run.timestamp, curve=curve,
                           spectrum=predict(weights, curve))

    series = SpectroscopySeries()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(process, run) for run in runs]
            for i, fut in enumerate(futures):
                try:
                    series.entries.append(fut.result())
                except (MeasurementError, ValueError) as exc:
                    series.failures.append((i, str(exc)))
    else:
        for i, run in enumerate(runs):
            try:
                series.entries.append(process(run))
            except (MeasurementError, ValueError) as exc:
                series.failures.append((i, str(exc)))
    return series


def write_heatmap_tables(runs: list[MeasuredRun], series: SpectroscopySeries,
                         out_dir) -> dict[str, str]:
    """Four aligned CSV matrices: raw decay and coherence channels on the
    measured grid, dephasing curves on the model grid, and predicted
    spectra on the model frequency grid.  Rows are runs (timestamp header
    column); columns carry the grid values."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}

    def write_matrix(name: str, col_label: str, columns: np.ndarray,
                     rows: list[tuple[str, np.ndarray]]):
        path = out / f"{name}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("timestamp," + ",".join(f"{c:.17g}" for c in columns) + "\n")
            fh.write(f"# columns: {col_label}\n")
            for label, values in rows:
                fh.write(label + "," + ",".join(f"{v:.17g}" for v in values) + "\n")
        paths[name] = str(path)

    write_matrix("t1", "time_us", runs[0].times,
                 [(r.timestamp, r.p1_t1) for r in runs])
    write_matrix("t2", "time_us", runs[0].times,
                 [(r.timestamp, r.p0_t2) for r in runs])
    if series.entries:
        write_matrix("tphi", "time_us", series.entries[0].curve.times,
                     [(e.timestamp, e.curve.values) for e in series.entries])
        write_matrix("spectra", "omega_rad_per_us",
                     series.entries[0].spectrum.grid.omegas,
                     [(e.timestamp, e.spectrum.values) for e in series.entries])
    return paths
