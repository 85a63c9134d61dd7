import hashlib
from pathlib import Path

import numpy as np
import pytest

from noisespec.cli import cli_dispatch
from noisespec.forward import write_curve_csv, CoherenceCurve
from noisespec.kraus import rho_from_csv_row
from noisespec.measured import synthetic_run, write_run_csv
from noisespec.spectra import (NoiseSpectrum, default_grid, read_spectrum_csv,
                               write_spectrum_csv, evaluate_spectrum,
                               sample_params)


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 2

    def test_unknown_flag_is_usage_error(self):
        assert cli_dispatch(["gen-dataset", "--wat", "1"]) == 2

    def test_help_exits_zero(self):
        assert cli_dispatch(["--help"]) == 0

    def test_domain_error_is_one(self, tmp_path):
        missing = str(tmp_path / "nope.bin")
        out = str(tmp_path / "s.csv")
        code = cli_dispatch(["predict", "--model", missing,
                             "--curve", missing, "--out", out])
        assert code == 1


class TestGenDataset:
    def test_deterministic_checksums(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert cli_dispatch(["gen-dataset", "--n", "100", "--seed", "7",
                                 "--out", str(out)]) == 0
        for name in ("manifest.txt", "train.bin", "validation.bin", "test.bin"):
            assert sha(out1 / name) == sha(out2 / name)


class TestPredictPipeline:
    def test_predict_writes_valid_spectrum(self, tmp_path, shared_corpus_dir,
                                           shared_model_path, shared_corpus):
        curve_path = tmp_path / "curve.csv"
        write_curve_csv(CoherenceCurve(shared_corpus.times,
                                       shared_corpus.split("test").curves[0]),
                        curve_path)
        out = tmp_path / "spectrum.csv"
        code = cli_dispatch(["predict", "--model", str(shared_model_path),
                             "--curve", str(curve_path), "--out", str(out)])
        assert code == 0
        spectrum = read_spectrum_csv(out)
        assert spectrum.grid.count == 501
        assert np.all(spectrum.values > 0)

    def test_predict_deterministic(self, tmp_path, shared_corpus,
                                   shared_model_path):
        curve_path = tmp_path / "curve.csv"
        write_curve_csv(CoherenceCurve(shared_corpus.times,
                                       shared_corpus.split("test").curves[1]),
                        curve_path)
        outs = [tmp_path / "s1.csv", tmp_path / "s2.csv"]
        for out in outs:
            assert cli_dispatch(["predict", "--model", str(shared_model_path),
                                 "--curve", str(curve_path),
                                 "--out", str(out)]) == 0
        assert sha(outs[0]) == sha(outs[1])


class TestTrain:
    def test_train_bit_identical_across_runs(self, tmp_path, shared_corpus_dir):
        outs = [tmp_path / "m1.bin", tmp_path / "m2.bin"]
        for out in outs:
            code = cli_dispatch(["train", "--data", str(shared_corpus_dir),
                                 "--epochs", "2", "--seed", "3",
                                 "--out", str(out)])
            assert code == 0
        assert sha(outs[0]) == sha(outs[1])


class TestOptimizeDD:
    def test_optimize_and_scan(self, tmp_path):
        grid = default_grid()
        center = np.pi * 4 / 60.0
        width = center / 10.0
        values = 1e-4 + 0.05 * width ** 2 / (width ** 2 +
                                             (grid.omegas - center) ** 2)
        spec_path = tmp_path / "spec.csv"
        write_spectrum_csv(NoiseSpectrum(grid, values), spec_path)
        seq_out = tmp_path / "seq.txt"
        assert cli_dispatch(["optimize-dd", "--spectrum", str(spec_path),
                             "--n", "4", "--time", "60",
                             "--out", str(seq_out)]) == 0
        line = seq_out.read_text().strip()
        assert line.count(";") == 2
        scan_out = tmp_path / "scan.csv"
        assert cli_dispatch(["scan-dd", "--spectrum", str(spec_path),
                             "--n-list", "1,2", "--t-count", "3",
                             "--t-min", "10", "--t-max", "60",
                             "--out", str(scan_out)]) == 0
        assert scan_out.read_text().startswith("t_us,n,improvement_pct")


class TestSimulateKraus:
    def test_plus_state_evolution(self, tmp_path):
        out = tmp_path / "rho.csv"
        assert cli_dispatch(["simulate-kraus", "--gamma1", "0.0",
                             "--chi", "0.693147180559945", "--time", "5",
                             "--out", str(out)]) == 0
        rho = rho_from_csv_row(out.read_text())
        assert rho[0, 1].real == pytest.approx(0.25, rel=1e-9)


class TestProcessRun:
    def test_round_trip(self, tmp_path):
        times = np.geomspace(2.0, 300.0, 40)
        grid = default_grid()
        spectrum = evaluate_spectrum(sample_params(2), grid)
        run = synthetic_run(spectrum, 1.0 / 300.0, times, seed=4,
                            timestamp="1")
        run_path = tmp_path / "run.csv"
        write_run_csv(run, run_path)
        out = tmp_path / "curve.csv"
        assert cli_dispatch(["process-run", "--run", str(run_path),
                             "--out", str(out)]) == 0
        assert out.read_text().startswith("time_us,coherence")


class TestTimeseries:
    def test_series_outputs(self, tmp_path, shared_model_path, shared_corpus):
        grid = default_grid()
        spectrum = evaluate_spectrum(sample_params(9), grid)
        times = np.geomspace(2.0, 720.0, 150)
        run_paths = []
        for i in range(3):
            run = synthetic_run(spectrum, 1.0 / 500.0, times, seed=i,
                                timestamp=str(i))
            path = tmp_path / f"run{i}.csv"
            write_run_csv(run, path)
            run_paths.append(str(path))
        out_dir = tmp_path / "series"
        code = cli_dispatch(["timeseries", "--model", str(shared_model_path),
                             "--runs", *run_paths, "--out", str(out_dir)])
        assert code == 0
        for name in ("t1", "t2", "tphi", "spectra"):
            table = (out_dir / f"{name}.csv").read_text().strip().splitlines()
            assert table[0].startswith("timestamp,")
            assert len(table) == 2 + 3  # header + comment + one row per run


class TestHeatmapCommand:
    def test_heatmap_csv(self, tmp_path, shared_corpus_dir, shared_model_path):
        out = tmp_path / "matrix.csv"
        code = cli_dispatch(["heatmap", "--data", str(shared_corpus_dir),
                             "--model", f"0.03={shared_model_path}",
                             "--test-sigmas", "0.01,0.05",
                             "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2


class TestCompareCommand:
    def test_small_compare_table(self, tmp_path, shared_corpus_dir,
                                 shared_model_path):
        out = tmp_path / "compare.csv"
        code = cli_dispatch(["compare", "--data", str(shared_corpus_dir),
                             "--model", str(shared_model_path),
                             "--records", "4", "--budget", "40",
                             "--sigmas", "0.03", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "sigma,method,summary_error,spread,n_records"
        assert len(lines) == 3


class TestInvertClassicalCommand:
    def test_writes_spectrum(self, tmp_path, shared_corpus):
        curve_path = tmp_path / "curve.csv"
        write_curve_csv(CoherenceCurve(shared_corpus.times,
                                       shared_corpus.split("test").curves[0]),
                        curve_path)
        out = tmp_path / "fit.csv"
        code = cli_dispatch(["invert-classical", "--curve", str(curve_path),
                             "--budget", "50", "--out", str(out)])
        assert code == 0
        assert read_spectrum_csv(out).grid.count == 501
