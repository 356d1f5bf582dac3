"""Command-line interface: CSV I/O, config handling, end-to-end runs."""

import csv

import numpy as np
import pytest

from tvmfm.cli import (
    EstimationSettings,
    InputError,
    main,
    read_series_csv,
    rolling_average,
    write_series_csv,
)
from tvmfm.estimation import MatrixSeries
from tvmfm.kernels import rot_bandwidth
from tvmfm.simulate import ExperimentConfig, gen_dgp1


def write_csv(path, rows, header="t,i,j,value"):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def series_rows(data):
    T, p, q = data.shape
    for t in range(T):
        for i in range(p):
            for j in range(q):
                yield (t + 1, i + 1, j + 1, repr(data[t, i, j]))


class TestSeriesCsv:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        series = MatrixSeries(data=rng.standard_normal((7, 4, 3)))
        path = tmp_path / "series.csv"
        write_series_csv(path, series)
        back = read_series_csv(path)
        assert np.array_equal(back.data, series.data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            read_series_csv(tmp_path / "nope.csv")

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [(1, 1, 1, 0.0)], header="time,i,j,value")
        with pytest.raises(InputError, match="header"):
            read_series_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        with open(path, "w") as fh:
            fh.write("t,i,j,value\n1,1,1\n")
        with pytest.raises(InputError, match="4 fields"):
            read_series_csv(path)

    def test_incomplete_grid(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [(1, 1, 1, 0.5), (1, 2, 2, 0.5), (1, 2, 1, 0.5)])
        with pytest.raises(InputError, match="complete"):
            read_series_csv(path)

    def test_duplicate_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [(1, 1, 1, 0.5), (1, 1, 1, 0.7),
                         (1, 1, 2, 0.5), (1, 2, 1, 0.5)])
        with pytest.raises(InputError, match="duplicate or missing"):
            read_series_csv(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [(1, 1, 1, "nan"), (1, 1, 2, 0.5)])
        with pytest.raises(InputError, match="non-finite"):
            read_series_csv(path)

    def test_zero_based_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [(0, 1, 1, 0.5), (1, 1, 1, 0.5)])
        with pytest.raises(InputError, match="1-based"):
            read_series_csv(path)


class TestRollingAverage:
    def test_trailing_mean_with_shortened_start(self):
        data = np.arange(1.0, 6.0).reshape(5, 1, 1)
        out = rolling_average(MatrixSeries(data=data), 3)
        expect = np.array([1.0, 1.5, 2.0, 3.0, 4.0]).reshape(5, 1, 1)
        assert np.allclose(out.data, expect)

    def test_window_one_is_identity(self):
        series = MatrixSeries(data=np.random.default_rng(1)
                              .standard_normal((4, 2, 2)))
        out = rolling_average(series, 1)
        assert np.array_equal(out.data, series.data)


class TestEstimationSettings:
    def test_defaults(self):
        s = EstimationSettings({})
        assert s.kernel == "epanechnikov"
        spec = s.spec(20, 100)
        assert spec.bandwidth == pytest.approx(rot_bandwidth(20, 100))
        star = s.spec_star(20, 100)
        assert star.bandwidth == pytest.approx(2.0 * rot_bandwidth(20, 100))

    def test_overrides(self):
        s = EstimationSettings({"estimation": {"h": 0.3, "h_star": 0.2,
                                               "kernel": "quartic",
                                               "rank": [2, 3]}})
        assert s.spec(20, 100).bandwidth == 0.3
        assert s.spec_star(20, 100).bandwidth == 0.2
        assert s.rank == [2, 3]

    def test_bad_keys_and_values(self):
        with pytest.raises(InputError, match="unknown"):
            EstimationSettings({"estimation": {"bandwith": 0.3}})
        with pytest.raises(InputError, match="rank"):
            EstimationSettings({"estimation": {"rank": [2]}})
        with pytest.raises(InputError, match="rolling_avg"):
            EstimationSettings({"estimation": {"rolling_avg": -1}})


def read_table(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


@pytest.fixture(scope="module")
def dgp1_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "dgp1.csv"
    cfg = ExperimentConfig(p=10, q=9, T=60, psi=0.1, seed=2)
    series, _ = gen_dgp1(cfg, 0)
    write_series_csv(out, series)
    return out


class TestEstimateCommand:
    def test_outputs_and_normalization(self, dgp1_csv, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('[estimation]\nrank = [2, 2]\n')
        rc = main(["estimate", "--data", str(dgp1_csv),
                   "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 0
        for name in ("loadings_R.csv", "loadings_C.csv", "eigvals_R.csv",
                     "eigvals_C.csv", "switch_stats_R.csv",
                     "switch_stats_C.csv", "factors.csv"):
            assert (tmp_path / name).exists()
        rows = read_table(tmp_path / "loadings_R.csv")
        sums = {}
        for row in rows:
            key = (row["t"], row["factor"])
            sums[key] = sums.get(key, 0.0) + abs(float(row["value"]))
        assert all(abs(s - 1.0) < 1e-10 for s in sums.values())
        factors = read_table(tmp_path / "factors.csv")
        assert len(factors) == 60 * 2 * 2

    def test_deterministic_outputs(self, dgp1_csv, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('[estimation]\nrank = [2, 2]\n')
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        for out in (out1, out2):
            assert main(["estimate", "--data", str(dgp1_csv),
                         "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("loadings_R.csv", "factors.csv", "eigvals_C.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_data_exits_two(self, tmp_path, capsys):
        rc = main(["estimate", "--data", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_constant_series_near_flat_eigvals(self, tmp_path):
        rng = np.random.default_rng(3)
        R = rng.standard_normal((8, 2))
        C = rng.standard_normal((8, 2))
        F = np.array([[3.0, 0.2], [0.1, 1.5]])
        Y = np.repeat((R @ F @ C.T)[None], 200, axis=0)
        path = tmp_path / "const.csv"
        write_series_csv(path, MatrixSeries(data=Y))
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("[estimation]\nrank = [2, 2]\nh = 0.5\n"
                       "smooth = false\n")
        assert main(["estimate", "--data", str(path), "--config", str(cfg),
                     "--out", str(tmp_path)]) == 0
        rows = read_table(tmp_path / "eigvals_R.csv")
        top = np.array([float(r["value"]) for r in rows if r["factor"] == "1"])
        assert top.std() / top.mean() < 0.02


class TestDiagnoseCommand:
    def test_emits_plot_tables(self, dgp1_csv, tmp_path):
        rc = main(["diagnose", "--data", str(dgp1_csv), "--out", str(tmp_path)])
        assert rc == 0
        eig = read_table(tmp_path / "eigvals_R.csv")
        assert {r["factor"] for r in eig} == {"1", "2", "3", "4", "5", "6"}
        stats = read_table(tmp_path / "switch_stats_R.csv")
        assert set(stats[0].keys()) == {"t", "i", "value", "threshold",
                                        "iqr15", "q95"}
        assert len(stats) == 60 * 5  # d-1 rows for d = top_eigvals cap


class TestSimulateCommand:
    def write_config(self, path, n_reps=2, extra=""):
        path.write_text(
            "[experiment]\n"
            'dgp = "dgp1"\np = 8\nq = 8\nT = 40\npsi = 0.1\nseed = 9\n'
            f"n_reps = {n_reps}\n"
            "[estimation]\nsmooth = false\n" + extra)

    def test_outputs_and_thread_invariance(self, tmp_path, monkeypatch):
        cfg = tmp_path / "sim.toml"
        self.write_config(cfg)
        out1 = tmp_path / "one"
        out2 = tmp_path / "four"
        monkeypatch.setenv("TVMFM_THREADS", "1")
        assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        monkeypatch.setenv("TVMFM_THREADS", "4")
        assert main(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
        for name in ("reps.csv", "summary.csv", "rank_freq.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        reps = read_table(out1 / "reps.csv")
        assert len(reps) == 2
        assert all(0.0 <= float(r["dbar_R"]) <= np.sqrt(2) * 2 for r in reps)
        freq = read_table(out1 / "rank_freq.csv")
        assert sum(float(r["frequency"]) for r in freq) == pytest.approx(1.0)

    def test_bad_threads_env(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "sim.toml"
        self.write_config(cfg)
        monkeypatch.setenv("TVMFM_THREADS", "zero")
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2
        assert "TVMFM_THREADS" in capsys.readouterr().err

    def test_bad_config_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "sim.toml"
        cfg.write_text('[experiment]\ndgp = "dgp9"\n')
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err
