"""Dephasing spectra and pulse-sequence filter functions.

Builds a three-segment noise spectrum (white plateau, 1/w section,
Lorentzian tail), evaluates CPMG filter functions, and exports both as
CSV for plotting.  Run from the repository root:

    python demos/demo_spectra_and_filters.py
"""

from pathlib import Path

import numpy as np

from noisespec import (cpmg_sequence, default_grid, evaluate_spectrum,
                       filter_function, sample_params, sequence_to_line,
                       tie_derived_params, write_spectrum_csv)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def main():
    grid = default_grid()
    print(f"frequency grid: {grid.count} log-spaced points over "
          f"[{grid.omega_min:.3g}, {grid.omega_max:.3g}] rad/us")

    # A hand-picked spectrum: white level 0.005 rad^2/us up to 0.4 rad/us,
    # then 1/w, then a Lorentzian knee near 1 rad/us.
    params = tie_derived_params(a_white=5e-3, omega_c1=0.4, omega_c2=4.0,
                                k_lor=1.0)
    spectrum = evaluate_spectrum(params, grid)
    write_spectrum_csv(spectrum, OUT / "spectrum_example.csv")
    print(f"S(w) spans {spectrum.values.min():.3g} .. "
          f"{spectrum.values.max():.3g} rad^2/us "
          f"-> {OUT / 'spectrum_example.csv'}")

    # Randomly sampled family members
    for seed in range(3):
        sampled = evaluate_spectrum(sample_params(seed), grid)
        write_spectrum_csv(sampled, OUT / f"spectrum_sampled_{seed}.csv")
    print("wrote three samples from the generative family")

    # CPMG filter functions concentrate sensitivity near w = pi*n/t
    total_time = 100.0
    for n in (1, 8, 32):
        seq = cpmg_sequence(n, total_time, pulse_width=0.048)
        curve = filter_function(seq, grid)
        passband = grid.omegas[np.argmax(curve.values / grid.omegas ** 2)]
        print(f"CPMG-{n:<2d} at t={total_time:.0f} us: "
              f"F/w^2 peaks near {passband:.3f} rad/us "
              f"(pi*n/t = {np.pi * n / total_time:.3f})")
        data = np.column_stack([grid.omegas, curve.values])
        np.savetxt(OUT / f"filter_cpmg{n}.csv", data, delimiter=",",
                   header="omega_rad_per_us,F", comments="")

    print("one-line sequence format:",
          sequence_to_line(cpmg_sequence(4, 10.0, 0.048)))


if __name__ == "__main__":
    main()
