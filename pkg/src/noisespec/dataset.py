"""Synthetic corpus generation and binary persistence.

A corpus is a directory of manifest.txt plus train.bin / validation.bin /
test.bin.  Records are fixed-width little-endian float64 blocks so the
files can be streamed and checksummed trivially:

    [attempt_index, 7 spectrum params, t_phi, p, residual,
     501 spectrum values, 150 noisy curve values]

Spectra are regressed downstream as log10(S) normalized to zero mean and
unit variance over the training split; the statistics live in the
manifest and the inverse transform is applied at prediction time.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import (CoherenceCurve, CpmgFamily, CurveSynthesizer, FitError,
                      StretchedExpFit, DEFAULT_PULSE_WIDTH, default_time_grid,
                      fit_stretched_exponential)
from .spectra import (DEFAULT_BOUNDS, FrequencyGrid, NoiseSpectrum, ParamBounds,
                      PARAM_NAMES, SpectrumParams, default_grid,
                      evaluate_spectrum, params_from_array, sample_params)

FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "validation", "test")
RECORD_DOUBLES = 1 + 7 + 3 + 501 + 150
_REJECTION_WINDOW = 1000
_MAX_REJECTION_RATE = 0.95


class DatasetError(ValueError):
    """Corpus files are missing, corrupt, or inconsistent."""


@dataclass(frozen=True)
class FitAcceptance:
    """Bounds on the stretched-exponential fit that a record must satisfy."""

    p_min: float = 0.7
    p_max: float = 3.0
    t_phi_min: float = 10.0
    t_phi_max: float = 2000.0

    def accepts(self, fit: StretchedExpFit) -> bool:
        return (self.p_min <= fit.p <= self.p_max
                and self.t_phi_min <= fit.t_phi <= self.t_phi_max)


@dataclass(frozen=True)
class DatasetRecord:
    params: SpectrumParams
    spectrum: NoiseSpectrum
    curve: CoherenceCurve
    fit: StretchedExpFit
    split: str
    attempt_index: int


@dataclass
class DatasetManifest:
    seed: int
    noise_sigma: float
    counts: dict[str, int]
    omega_min: float
    omega_max: float
    omega_count: int
    time_min: float
    time_max: float
    time_count: int
    cpmg_n: int
    pulse_width: float
    tie_amplitudes: bool
    norm_mean: float
    norm_std: float
    acceptance: FitAcceptance
    bounds: ParamBounds
    checksums: dict[str, str] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(np.geomspace(self.omega_min, self.omega_max,
                                          self.omega_count))

    def time_grid(self) -> np.ndarray:
        return np.geomspace(self.time_min, self.time_max, self.time_count)

    def family(self) -> CpmgFamily:
        return CpmgFamily(self.cpmg_n, self.pulse_width)

    def normalize_log_spectra(self, values: np.ndarray) -> np.ndarray:
        return (np.log10(values) - self.norm_mean) / self.norm_std

    def denormalize_log_spectra(self, z: np.ndarray) -> np.ndarray:
        return np.power(10.0, z * self.norm_std + self.norm_mean)


def _split_of(seed: int, index: int, fractions: tuple[float, ...]) -> str:
    u = np.random.default_rng(np.random.SeedSequence((seed, index, 2))).random()
    edge = 0.0
    for name, frac in zip(SPLIT_NAMES, fractions):
        edge += frac
        if u < edge:
            return name
    return SPLIT_NAMES[-1]


def _record_bytes(attempt: int, params: SpectrumParams, fit: StretchedExpFit,
                  spectrum_values: np.ndarray, curve_values: np.ndarray) -> bytes:
    block = np.empty(RECORD_DOUBLES)
    block[0] = float(attempt)
    block[1:8] = params.as_array()
    block[8] = fit.t_phi
    block[9] = fit.p
    block[10] = fit.residual
    block[11:512] = spectrum_values
    block[512:662] = curve_values
    return block.astype("<f8").tobytes()


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while chunk := fh.read(1 << 20):
            digest.update(chunk)
    return digest.hexdigest()


def generate_dataset(out_dir, n_records: int, *,
                     noise_sigma: float = 0.03,
                     seed: int = 0,
                     splits: tuple[float, float, float] = (0.8, 0.1, 0.1),
                     bounds: ParamBounds = DEFAULT_BOUNDS,
                     tie_amplitudes: bool = True,
                     cpmg_n: int = 32,
                     pulse_width: float = DEFAULT_PULSE_WIDTH,
                     acceptance: FitAcceptance = FitAcceptance(),
                     threads: int = 1) -> DatasetManifest:
    """Generate, filter, and persist a corpus of (curve, spectrum) pairs.

    Sampling, noise, and split assignment are pure functions of the seed
    and record index, so a rerun with the same arguments is byte-identical.
    Records whose clean curve fails the stretched-exponential acceptance
    window are replaced until n_records are kept.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if len(splits) != 3 or any(f < 0 for f in splits) or abs(sum(splits) - 1.0) > 1e-9:
        raise ValueError("split fractions must be non-negative and sum to 1")
    if threads < 1:
        raise ValueError("threads must be >= 1")

    grid = default_grid()
    times = default_time_grid()
    synth = CurveSynthesizer(grid, CpmgFamily(cpmg_n, pulse_width), times)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def evaluate_attempt(attempt: int):
        params = sample_params(np.random.SeedSequence((seed, attempt, 0)),
                               bounds, tie_amplitudes)
        spectrum = evaluate_spectrum(params, grid)
        clean = np.exp(-synth.exponents(spectrum))
        try:
            fit = fit_stretched_exponential(CoherenceCurve(times, clean))
        except FitError:
            return None
        if not acceptance.accepts(fit):
            return None
        return params, spectrum.values, clean, fit

    counts = {name: 0 for name in SPLIT_NAMES}
    train_sum = 0.0
    train_sq = 0.0
    train_n = 0
    window: deque[bool] = deque(maxlen=_REJECTION_WINDOW)
    accepted = 0
    attempt = 0
    chunk = 64

    handles = {name: open(out / f"{name}.bin", "wb") for name in SPLIT_NAMES}
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while accepted < n_records:
            attempts = range(attempt, attempt + chunk)
            if pool is not None:
                results = list(pool.map(evaluate_attempt, attempts))
            else:
                results = [evaluate_attempt(a) for a in attempts]
            for a, res in zip(attempts, results):
                window.append(res is not None)
                if len(window) == _REJECTION_WINDOW:
                    rate = 1.0 - sum(window) / len(window)
                    if rate > _MAX_REJECTION_RATE:
                        raise DatasetError(
                            f"rejection rate {rate:.0%} over the last "
                            f"{_REJECTION_WINDOW} samples; check the bounds")
                if res is None:
                    continue
                params, spec_values, clean, fit = res
                noise_rng = np.random.default_rng(
                    np.random.SeedSequence((seed, accepted, 1)))
                noisy = clean + noise_sigma * noise_rng.standard_normal(clean.size)
                split = _split_of(seed, accepted, tuple(splits))
                handles[split].write(_record_bytes(a, params, fit,
                                                   spec_values, noisy))
                counts[split] += 1
                if split == "train":
                    logs = np.log10(spec_values)
                    train_sum += float(np.sum(logs))
                    train_sq += float(np.sum(logs * logs))
                    train_n += logs.size
                accepted += 1
                if accepted >= n_records:
                    break
            attempt += chunk
    finally:
        if pool is not None:
            pool.shutdown()
        for fh in handles.values():
            fh.close()

    if train_n == 0:
        warnings.warn("no training records; normalization statistics default to (0, 1)")
        norm_mean, norm_std = 0.0, 1.0
    else:
        norm_mean = train_sum / train_n
        variance = max(train_sq / train_n - norm_mean ** 2, 0.0)
        norm_std = math.sqrt(variance) if variance > 0 else 1.0

    manifest = DatasetManifest(
        seed=seed, noise_sigma=noise_sigma, counts=counts,
        omega_min=grid.omega_min, omega_max=grid.omega_max,
        omega_count=grid.count, time_min=float(times[0]),
        time_max=float(times[-1]), time_count=times.size,
        cpmg_n=cpmg_n, pulse_width=pulse_width, tie_amplitudes=tie_amplitudes,
        norm_mean=norm_mean, norm_std=norm_std,
        acceptance=acceptance, bounds=bounds,
        checksums={name: _sha256_file(out / f"{name}.bin")
                   for name in SPLIT_NAMES})
    write_manifest(manifest, out / "manifest.txt")
    return manifest


# ---------------------------------------------------------------------------
# Manifest I/O

def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [
        f"format_version={manifest.format_version}",
        f"seed={manifest.seed}",
        f"noise_sigma={manifest.noise_sigma:.17g}",
    ]
    for name in SPLIT_NAMES:
        lines.append(f"n_{name}={manifest.counts[name]}")
    lines += [
        f"omega_min={manifest.omega_min:.17g}",
        f"omega_max={manifest.omega_max:.17g}",
        f"omega_count={manifest.omega_count}",
        f"time_min={manifest.time_min:.17g}",
        f"time_max={manifest.time_max:.17g}",
        f"time_count={manifest.time_count}",
        f"cpmg_n={manifest.cpmg_n}",
        f"pulse_width={manifest.pulse_width:.17g}",
        f"tie_amplitudes={int(manifest.tie_amplitudes)}",
        f"norm_mean={manifest.norm_mean:.17g}",
        f"norm_std={manifest.norm_std:.17g}",
        f"fit_p_min={manifest.acceptance.p_min:.17g}",
        f"fit_p_max={manifest.acceptance.p_max:.17g}",
        f"fit_t_phi_min={manifest.acceptance.t_phi_min:.17g}",
        f"fit_t_phi_max={manifest.acceptance.t_phi_max:.17g}",
        f"record_doubles={RECORD_DOUBLES}",
    ]
    for name in PARAM_NAMES:
        lo, hi = manifest.bounds[name]
        lines.append(f"bounds.{name}.min={lo:.17g}")
        lines.append(f"bounds.{name}.max={hi:.17g}")
    for name in SPLIT_NAMES:
        lines.append(f"sha256_{name}={manifest.checksums[name]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing manifest: {path}")
    fields: dict[str, str] = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        version = int(fields["format_version"])
        if version != FORMAT_VERSION:
            raise DatasetError(f"{path}: unsupported format version {version}")
        bounds = ParamBounds({name: (float(fields[f"bounds.{name}.min"]),
                                     float(fields[f"bounds.{name}.max"]))
                              for name in PARAM_NAMES})
        manifest = DatasetManifest(
            seed=int(fields["seed"]),
            noise_sigma=float(fields["noise_sigma"]),
            counts={name: int(fields[f"n_{name}"]) for name in SPLIT_NAMES},
            omega_min=float(fields["omega_min"]),
            omega_max=float(fields["omega_max"]),
            omega_count=int(fields["omega_count"]),
            time_min=float(fields["time_min"]),
            time_max=float(fields["time_max"]),
            time_count=int(fields["time_count"]),
            cpmg_n=int(fields["cpmg_n"]),
            pulse_width=float(fields["pulse_width"]),
            tie_amplitudes=bool(int(fields["tie_amplitudes"])),
            norm_mean=float(fields["norm_mean"]),
            norm_std=float(fields["norm_std"]),
            acceptance=FitAcceptance(
                p_min=float(fields["fit_p_min"]),
                p_max=float(fields["fit_p_max"]),
                t_phi_min=float(fields["fit_t_phi_min"]),
                t_phi_max=float(fields["fit_t_phi_max"])),
            bounds=bounds,
            checksums={name: fields[f"sha256_{name}"] for name in SPLIT_NAMES},
            format_version=version)
    except KeyError as exc:
        raise DatasetError(f"{path}: missing manifest key {exc}") from exc
    if int(fields["record_doubles"]) != RECORD_DOUBLES:
        raise DatasetError(f"{path}: unexpected record width")
    return manifest


# ---------------------------------------------------------------------------
# Loading

def _verify_split_file(path: Path, count: int, checksum: str) -> None:
    if not path.exists():
        raise DatasetError(f"missing split file: {path}")
    expected = count * RECORD_DOUBLES * 8
    actual = path.stat().st_size
    if actual != expected:
        raise DatasetError(f"{path}: size {actual} bytes, expected {expected} "
                           f"({count} records); file truncated or corrupt")
    if _sha256_file(path) != checksum:
        raise DatasetError(f"{path}: checksum mismatch")


def _decode_record(block: np.ndarray, split: str, manifest: DatasetManifest,
                   grid: FrequencyGrid, times: np.ndarray) -> DatasetRecord:
    return DatasetRecord(
        params=params_from_array(block[1:8]),
        spectrum=NoiseSpectrum(grid, block[11:512].copy()),
        curve=CoherenceCurve(times, block[512:662].copy(),
                             manifest.noise_sigma),
        fit=StretchedExpFit(t_phi=float(block[8]), p=float(block[9]),
                            residual=float(block[10])),
        split=split,
        attempt_index=int(block[0]))


def load_dataset(path, splits: tuple[str, ...] = SPLIT_NAMES):
    """Stream records in manifest order with O(1) resident records.

    Each split file is size- and checksum-verified before its records are
    yielded, so truncation or corruption raises instead of silently
    producing a partial read.
    """
    root = Path(path)
    manifest = read_manifest(root / "manifest.txt")
    grid = manifest.frequency_grid()
    times = manifest.time_grid()
    for split in splits:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        fpath = root / f"{split}.bin"
        _verify_split_file(fpath, manifest.counts[split],
                           manifest.checksums[split])
        record_bytes = RECORD_DOUBLES * 8
        with open(fpath, "rb") as fh:
            while chunk := fh.read(record_bytes * 256):
                block = np.frombuffer(chunk, dtype="<f8")
                for i in range(block.size // RECORD_DOUBLES):
                    row = block[i * RECORD_DOUBLES:(i + 1) * RECORD_DOUBLES]
                    yield _decode_record(row, split, manifest, grid, times)


@dataclass
class SplitArrays:
    """One split held fully in memory, column-major by field."""

    params: np.ndarray       # (N, 7)
    fits: np.ndarray         # (N, 3): t_phi, p, residual
    spectra: np.ndarray      # (N, 501)
    curves: np.ndarray       # (N, 150), noisy
    attempt_index: np.ndarray

    @property
    def count(self) -> int:
        return self.curves.shape[0]


class Corpus:
    """A corpus directory loaded into memory for training and evaluation."""

    def __init__(self, path):
        root = Path(path)
        self.root = root
        self.manifest = read_manifest(root / "manifest.txt")
        self.grid = self.manifest.frequency_grid()
        self.times = self.manifest.time_grid()
        self._splits: dict[str, SplitArrays] = {}
        for split in SPLIT_NAMES:
            fpath = root / f"{split}.bin"
            _verify_split_file(fpath, self.manifest.counts[split],
                               self.manifest.checksums[split])
            raw = np.fromfile(fpath, dtype="<f8")
            table = raw.reshape(-1, RECORD_DOUBLES)
            self._splits[split] = SplitArrays(
                params=table[:, 1:8].copy(),
                fits=table[:, 8:11].copy(),
                spectra=table[:, 11:512].copy(),
                curves=table[:, 512:662].copy(),
                attempt_index=table[:, 0].astype(np.int64))

    def split(self, name: str) -> SplitArrays:
        return self._splits[name]

    def normalized_targets(self, name: str) -> np.ndarray:
        return self.manifest.normalize_log_spectra(self._splits[name].spectra)


def load_corpus(path) -> Corpus:
    return Corpus(path)
