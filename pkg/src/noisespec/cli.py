"""Command-line entry point.

Exit codes are a stable contract: 0 success, 1 domain/validation error,
2 usage error.  Domain errors are reported as a single 'error: ...' line
on stderr.  The NOISESPEC_CONFIG environment variable supplies a default
parameter-bounds file for commands that take --config.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

CONFIG_ENV_VAR = "NOISESPEC_CONFIG"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _bounds_from(args):
    from .spectra import DEFAULT_BOUNDS, load_bounds
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if path:
        return load_bounds(path)
    return DEFAULT_BOUNDS


def _add_common(parser, out_required=True):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", help="parameter-bounds file")
    parser.add_argument("--out", required=out_required, help="output path")
    parser.add_argument("--threads", type=int, default=1)


def _cmd_gen_dataset(args) -> int:
    from .dataset import generate_dataset
    splits = tuple(float(f) for f in args.splits.split(","))
    manifest = generate_dataset(args.out, args.n, noise_sigma=args.noise_sigma,
                                seed=args.seed, splits=splits,
                                bounds=_bounds_from(args),
                                cpmg_n=args.cpmg_n, threads=args.threads)
    counts = ", ".join(f"{k}={v}" for k, v in manifest.counts.items())
    print(f"wrote {args.out}: {counts}")
    return 0


def _cmd_train(args) -> int:
    from .dataset import load_corpus
    from .network import (DESK_CONFIG, FULL_CONFIG, build_network,
                          save_weights, train)
    corpus = load_corpus(args.data)
    config = FULL_CONFIG if args.full_size else DESK_CONFIG
    weights = build_network(config, seed=args.seed)
    weights, report = train(weights, corpus, epochs=args.epochs,
                            batch_size=args.batch_size,
                            learning_rate=args.learning_rate, seed=args.seed,
                            final_lr_fraction=args.final_lr_fraction)
    save_weights(weights, args.out)
    if args.report:
        report.write_csv(args.report)
    print(f"trained {report.epochs} epochs in {report.wall_time_s:.1f}s; "
          f"final val MAE {report.val_mae[-1]:.5f}; wrote {args.out}")
    return 0


def _cmd_predict(args) -> int:
    from .forward import read_curve_csv
    from .network import load_weights, predict
    from .spectra import write_spectrum_csv
    weights = load_weights(args.model)
    curve = read_curve_csv(args.curve)
    write_spectrum_csv(predict(weights, curve), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_invert_classical(args) -> int:
    from .classical import invert_classical, _random_init
    from .forward import CpmgFamily, read_curve_csv
    from .spectra import write_spectrum_csv, evaluate_spectrum, default_grid
    curve = read_curve_csv(args.curve)
    bounds = _bounds_from(args)
    rng = np.random.default_rng(args.seed)
    init = _random_init(rng, bounds, args.tied)
    fit = invert_classical(curve, CpmgFamily(args.cpmg_n), init,
                           budget=args.budget, bounds=bounds, tied=args.tied)
    write_spectrum_csv(evaluate_spectrum(fit.params, default_grid()), args.out)
    print(f"objective={fit.objective:.6g} evals={fit.n_evals} "
          f"converged={fit.converged}; wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    from .classical import compare_with_network
    from .dataset import load_corpus
    from .network import load_weights
    corpus = load_corpus(args.data)
    weights = load_weights(args.model)
    sigmas = tuple(float(s) for s in args.sigmas.split(","))
    table = compare_with_network(corpus, weights, budget=args.budget,
                                 sigmas=sigmas, n_records=args.records,
                                 seed=args.seed)
    table.write_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_optimize_dd(args) -> int:
    from .ddopt import DDProblem, optimize_sequence
    from .pulses import sequence_to_line
    from .spectra import read_spectrum_csv
    spectrum = read_spectrum_csv(args.spectrum)
    problem = DDProblem(spectrum, args.n, args.time, min_gap=args.min_gap)
    sol = optimize_sequence(problem)
    Path(args.out).write_text(sequence_to_line(sol.sequence) + "\n",
                              encoding="utf-8")
    print(f"chi_cpmg={sol.chi_cpmg:.6g} chi_opt={sol.chi_optimized:.6g} "
          f"improvement={sol.improvement_pct:+.3f}%; wrote {args.out}")
    return 0


def _cmd_scan_dd(args) -> int:
    from .ddopt import coherence_improvement_scan, write_improvement_csv
    from .spectra import read_spectrum_csv
    spectrum = read_spectrum_csv(args.spectrum)
    n_list = [int(n) for n in args.n_list.split(",")]
    times = np.geomspace(args.t_min, args.t_max, args.t_count)
    scan = coherence_improvement_scan(spectrum, n_list, times,
                                      min_gap=args.min_gap)
    write_improvement_csv(scan, times, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_simulate_kraus(args) -> int:
    from .kraus import PLUS, evolve_noisy, rho_from_csv_row, rho_to_csv_row
    if args.rho_in == "plus":
        rho = PLUS
    else:
        rho = rho_from_csv_row(Path(args.rho_in).read_text(encoding="utf-8"))
    out = evolve_noisy(rho, args.gamma1, args.chi, args.time)
    Path(args.out).write_text(rho_to_csv_row(out) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _cmd_process_run(args) -> int:
    from .forward import write_curve_csv
    from .measured import dephasing_curve, read_run_csv
    run = read_run_csv(args.run)
    write_curve_csv(dephasing_curve(run), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_timeseries(args) -> int:
    from .measured import read_run_csv, run_timeseries, write_heatmap_tables
    from .network import load_weights
    weights = load_weights(args.model)
    runs = [read_run_csv(p) for p in args.runs]
    series = run_timeseries(runs, weights, threads=args.threads)
    paths = write_heatmap_tables(runs, series, args.out)
    for idx, message in series.failures:
        print(f"run {idx} failed: {message}", file=sys.stderr)
    print(f"processed {len(series.entries)}/{len(runs)} runs; "
          f"wrote {', '.join(sorted(paths))} under {args.out}")
    return 0


def _cmd_heatmap(args) -> int:
    from .dataset import load_corpus
    from .evaluate import robustness_heatmap
    from .network import load_weights
    corpus = load_corpus(args.data)
    models = {}
    for spec in args.model:
        sigma_text, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"--model expects SIGMA=PATH, got {spec!r}")
        models[float(sigma_text)] = load_weights(path)
    test_sigmas = tuple(float(s) for s in args.test_sigmas.split(","))
    result = robustness_heatmap(models, test_sigmas, corpus, seed=args.seed)
    result.write_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="noisespec",
                     description="dephasing-noise spectroscopy workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise-sigma", type=float, default=0.03)
    p.add_argument("--splits", default="0.8,0.1,0.1")
    p.add_argument("--cpmg-n", type=int, default=32)
    _add_common(p)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("train", help="train the inverse network")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=75)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=2e-3)
    p.add_argument("--final-lr-fraction", type=float, default=0.025,
                   help="cosine-decay floor as a fraction of the rate")
    p.add_argument("--full-size", action="store_true")
    p.add_argument("--report", help="optional per-epoch loss CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="invert one coherence curve")
    p.add_argument("--model", required=True)
    p.add_argument("--curve", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("invert-classical", help="derivative-free baseline fit")
    p.add_argument("--curve", required=True)
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--cpmg-n", type=int, default=32)
    p.add_argument("--tied", action="store_true",
                   help="fit the amplitude-tied family")
    _add_common(p)
    p.set_defaults(func=_cmd_invert_classical)

    p = sub.add_parser("compare", help="network vs classical error table")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--records", type=int, default=200)
    p.add_argument("--sigmas", default="0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09")
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("optimize-dd", help="optimize pulse timings")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--min-gap", type=float, default=0.048)
    _add_common(p)
    p.set_defaults(func=_cmd_optimize_dd)

    p = sub.add_parser("scan-dd", help="improvement vs time for several n")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--n-list", default="4,8,16,32")
    p.add_argument("--t-min", type=float, default=2.0)
    p.add_argument("--t-max", type=float, default=720.0)
    p.add_argument("--t-count", type=int, default=20)
    p.add_argument("--min-gap", type=float, default=0.048)
    _add_common(p)
    p.set_defaults(func=_cmd_scan_dd)

    p = sub.add_parser("simulate-kraus", help="apply damping channels")
    p.add_argument("--rho-in", default="plus",
                   help="'plus' or a CSV file with one density-matrix row")
    p.add_argument("--gamma1", type=float, required=True)
    p.add_argument("--chi", type=float, required=True)
    p.add_argument("--time", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate_kraus)

    p = sub.add_parser("process-run", help="measured run -> dephasing curve")
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_process_run)

    p = sub.add_parser("timeseries", help="consecutive runs -> heatmap tables")
    p.add_argument("--model", required=True)
    p.add_argument("--runs", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_timeseries)

    p = sub.add_parser("heatmap", help="train/test noise robustness matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--model", action="append", required=True,
                   metavar="SIGMA=PATH")
    p.add_argument("--test-sigmas", default="0.01,0.03,0.05,0.09")
    _add_common(p)
    p.set_defaults(func=_cmd_heatmap)

    return parser


def cli_dispatch(argv) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
