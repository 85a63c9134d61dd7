"""Prediction-error metrics, mode statistics, and the robustness matrix.

The headline error measure is the percentage spectrum error of one
prediction: the mean over grid points of |S_pred - S_true| / S_true in
linear S, times 100.  Per-record errors are summarized by the mode of
their histogram (1% bins), which is robust against the heavy tail of
poorly identified records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Corpus
from .forward import CurveSynthesizer
from .network import ModelWeights, predict_batch

DEFAULT_BIN_WIDTH = 1.0  # percent


def percentage_spectrum_errors(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Per-record mean relative error in percent, linear spectrum scale."""
    pred = np.atleast_2d(pred)
    true = np.atleast_2d(true)
    if pred.shape != true.shape:
        raise ValueError("prediction and truth shapes differ")
    if np.any(true <= 0):
        raise ValueError("true spectra must be strictly positive")
    return 100.0 * np.mean(np.abs(pred - true) / true, axis=1)


def error_histogram(errors: np.ndarray,
                    bin_width: float = DEFAULT_BIN_WIDTH) -> tuple[np.ndarray, np.ndarray]:
    errors = np.asarray(errors, dtype=float)
    top = max(float(np.max(errors)), bin_width) if errors.size else bin_width
    edges = np.arange(0.0, np.ceil(top / bin_width) * bin_width + bin_width,
                      bin_width)
    counts, _ = np.histogram(errors, bins=edges)
    return edges, counts


@dataclass(frozen=True)
class ModeStats:
    """Histogram-mode summary of a sample of percentage errors."""

    mode: float
    std_around_mode: float
    mean: float
    std: float
    max_count: int
    median_occupied_count: float
    n: int

    @property
    def has_dominant_mode(self) -> bool:
        """Whether the histogram has a well-defined single peak.

        The peak bin must stand at least 1.5x above the median occupied
        bin and collect at least 3% of the sample; the mass qualifier
        keeps a sparse scatter of singleton bins (where the tallest bin
        holds two or three stray records) from counting as a mode.
        """
        return (self.max_count >= 1.5 * self.median_occupied_count
                and self.max_count >= 0.03 * self.n)


def mode_stats(errors: np.ndarray,
               bin_width: float = DEFAULT_BIN_WIDTH) -> ModeStats:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("need at least one error value")
    edges, counts = error_histogram(errors, bin_width)
    best = int(np.argmax(counts))
    mode = float(edges[best] + 0.5 * bin_width)
    occupied = counts[counts > 0]
    return ModeStats(
        mode=mode,
        std_around_mode=float(np.sqrt(np.mean((errors - mode) ** 2))),
        mean=float(np.mean(errors)),
        std=float(np.std(errors)),
        max_count=int(counts[best]),
        median_occupied_count=float(np.median(occupied)),
        n=int(errors.size))


# ---------------------------------------------------------------------------
# Clean-curve regeneration and deterministic re-noising

def corpus_synthesizer(corpus: Corpus) -> CurveSynthesizer:
    return CurveSynthesizer(corpus.grid, corpus.manifest.family(), corpus.times)


def clean_curves(spectra: np.ndarray, synth: CurveSynthesizer) -> np.ndarray:
    out = np.empty((spectra.shape[0], synth.times.size))
    for i in range(spectra.shape[0]):
        out[i] = np.exp(-synth.exponents_from_values(spectra[i]))
    return out


def renoise(clean: np.ndarray, sigma: float, seed) -> np.ndarray:
    """Per-record Gaussian noise; the draw depends on (seed, record) only,
    so different sigmas scale the same noise realization."""
    noisy = np.empty_like(clean)
    for i in range(clean.shape[0]):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i, 3)))
        noisy[i] = clean[i] + sigma * rng.standard_normal(clean.shape[1])
    return noisy


def reconstruction_errors(weights: ModelWeights, curves_in: np.ndarray,
                          spectra_true: np.ndarray,
                          synth: CurveSynthesizer) -> np.ndarray:
    """Mean absolute error between the curve reconstructed from each
    prediction and the clean curve of the true spectrum."""
    pred = predict_batch(weights, curves_in)
    out = np.empty(pred.shape[0])
    for i in range(pred.shape[0]):
        c_rec = np.exp(-synth.exponents_from_values(pred[i]))
        c_true = np.exp(-synth.exponents_from_values(spectra_true[i]))
        out[i] = np.mean(np.abs(c_rec - c_true))
    return out


# ---------------------------------------------------------------------------
# Robustness matrix

@dataclass
class RobustnessResult:
    train_sigmas: tuple[float, ...]
    test_sigmas: tuple[float, ...]
    cells: dict[tuple[float, float], ModeStats]
    histograms: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]]

    def mode_matrix(self) -> np.ndarray:
        return np.array([[self.cells[(tr, te)].mode for te in self.test_sigmas]
                         for tr in self.train_sigmas])

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("train_sigma\\test_sigma," +
                     ",".join(f"{s:.17g}" for s in self.test_sigmas) + "\n")
            for tr in self.train_sigmas:
                row = [f"{tr:.17g}"]
                row += [f"{self.cells[(tr, te)].mode:.17g}" for te in self.test_sigmas]
                fh.write(",".join(row) + "\n")


def robustness_heatmap(models: dict[float, ModelWeights],
                       test_sigmas, corpus: Corpus, split: str = "test",
                       seed: int = 0,
                       bin_width: float = DEFAULT_BIN_WIDTH) -> RobustnessResult:
    """Mode percentage error for every (training noise, test noise) pair.

    Clean test curves are regenerated from the stored spectra and re-noised
    at each test sigma with deterministic per-record draws, so every model
    sees identical inputs per cell.
    """
    arrays = corpus.split(split)
    synth = corpus_synthesizer(corpus)
    clean = clean_curves(arrays.spectra, synth)
    test_sigmas = tuple(float(s) for s in test_sigmas)
    cells: dict[tuple[float, float], ModeStats] = {}
    histograms: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    for test_sigma in test_sigmas:
        noisy = renoise(clean, test_sigma, seed)
        for train_sigma, weights in models.items():
            pred = predict_batch(weights, noisy)
            errors = percentage_spectrum_errors(pred, arrays.spectra)
            key = (float(train_sigma), test_sigma)
            cells[key] = mode_stats(errors, bin_width)
            histograms[key] = error_histogram(errors, bin_width)
    return RobustnessResult(train_sigmas=tuple(float(s) for s in models),
                            test_sigmas=test_sigmas, cells=cells,
                            histograms=histograms)
