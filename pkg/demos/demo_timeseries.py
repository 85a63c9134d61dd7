"""Time-dependent spectroscopy on synthetic runs with a dephasing step.

Simulates ten consecutive paired acquisitions (4,000 shots each) where
the white-noise level jumps by 5x at run 6, processes them through the
dephasing extraction and the trained network, and writes the four aligned
heatmap tables.  Requires the model produced by
demo_dataset_and_network.py.

    python demos/demo_dataset_and_network.py   # once, to train the model
    python demos/demo_timeseries.py
"""

from pathlib import Path

import numpy as np

from noisespec.forward import CpmgFamily, CurveSynthesizer
from noisespec.measured import (run_timeseries, synthetic_run,
                                write_heatmap_tables)
from noisespec.network import load_weights
from noisespec.spectra import evaluate_spectrum, tie_derived_params

OUT = Path(__file__).parent / "output"
MODEL = OUT / "demo_model.bin"


def main():
    if not MODEL.exists():
        raise SystemExit("run demo_dataset_and_network.py first to train "
                         f"the model ({MODEL} is missing)")
    weights = load_weights(MODEL)
    grid = weights.frequency_grid()
    times = weights.time_grid()
    synth = CurveSynthesizer(grid, CpmgFamily(32), times)

    quiet = tie_derived_params(a_white=4e-3, omega_c1=0.5, omega_c2=5.0,
                               k_lor=1.0)
    loud = tie_derived_params(a_white=2e-2, omega_c1=0.5, omega_c2=5.0,
                              k_lor=1.0)
    gamma1 = 1.0 / 300.0
    runs = []
    for i in range(10):
        params = quiet if i < 5 else loud
        spectrum = evaluate_spectrum(params, grid)
        runs.append(synthetic_run(spectrum, gamma1, times, shots=4000,
                                  seed=200 + i, timestamp=str(i),
                                  synth=synth))
    print("processing 10 runs (white level steps 5x at run 6) ...")
    series = run_timeseries(runs, weights)
    paths = write_heatmap_tables(runs, series, OUT / "timeseries")

    plateau = grid.omegas < 0.15
    levels = np.array([float(np.mean(e.spectrum.values[plateau]))
                       for e in series.entries])
    print("predicted white level per run (rad^2/us):")
    for i, level in enumerate(levels):
        marker = " <- step" if i == 5 else ""
        print(f"  run {i}: {level:.4g}{marker}")
    spread = np.std(levels[:5])
    step = np.mean(levels[5:]) - np.mean(levels[:5])
    print(f"step size {step:.3g} vs baseline spread {spread:.3g} "
          f"({step / spread:.1f}x)")
    print("heatmap tables:", ", ".join(sorted(paths)))


if __name__ == "__main__":
    main()
