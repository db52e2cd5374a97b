import math
import subprocess
import sys

import numpy as np
import pytest

from graphsmc.experiments import (
    ExperimentConfig,
    ResultTable,
    ShortChainError,
    bootstrap_ci,
    compute_acf,
    derive_seed,
    integrated_autocorr_time,
    matched_annealing_runs,
    mc_standard_error,
    mse_table,
    run_experiment,
)


class TestACF:
    def test_lag_zero_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(500) + 2.0
        rho = compute_acf(x, 2.0, 10)
        assert rho[0] == pytest.approx(1.0, abs=0.05)

    def test_iid_chain_has_tiny_lag_one(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(100_000) + 5.0
        rho = compute_acf(x, 5.0, 1)
        assert abs(rho[1]) < 0.01

    def test_ar1_coefficient_recovered(self):
        rng = np.random.default_rng(2)
        n, phi = 200_000, 0.9
        x = np.empty(n)
        x[0] = 0.0
        noise = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + noise[t]
        rho = compute_acf(x, 0.0, 1)
        assert abs(rho[1] - phi) < 0.02

    def test_short_chain_error(self):
        with pytest.raises(ShortChainError):
            compute_acf(np.zeros(5), 0.0, 10)

    def test_iact_near_one_for_iid(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(50_000)
        assert integrated_autocorr_time(x, 0.0) == pytest.approx(1.0, abs=0.15)

    def test_mc_se_matches_naive_for_iid(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(50_000)
        assert mc_standard_error(x, 0.0) == pytest.approx(1.0 / math.sqrt(len(x)), rel=0.2)


class TestBootstrap:
    def test_constant_values(self):
        low, high, mean = bootstrap_ci(np.full(20, 3.5), rng=np.random.default_rng(5))
        assert low == high == mean == 3.5

    def test_contains_sample_mean(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(200)
        low, high, mean = bootstrap_ci(x, rng=rng)
        assert low <= mean <= high

    def test_clt_width(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(1000)
        low, high, _ = bootstrap_ci(x, rng=rng)
        target = 2 * 1.96 / math.sqrt(1000)
        assert abs((high - low) - target) <= 0.2 * target

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            bootstrap_ci([1.0])


class TestMSE:
    def test_exact_estimates_give_zero(self):
        rows = mse_table({("smc", 10): [2.0, 2.0, 2.0]}, 2.0)
        assert rows == [("smc", 10, 0.0)]

    def test_single_replicate_squared_error(self):
        rows = mse_table({("smc", 4): [3.0]}, 1.0)
        assert rows[0][2] == pytest.approx(4.0)

    def test_symmetric_pair(self):
        rows = mse_table({("smc", 4): [0.0, 2.0]}, 1.0)
        assert rows[0][2] == pytest.approx(1.0)

    def test_missing_reference(self):
        with pytest.raises(ValueError):
            mse_table({("smc", 4): [1.0]}, float("nan"))


class TestSeeding:
    def test_derive_seed_stable(self):
        assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)

    def test_matched_runs(self):
        # N * K particle-steps vs temps * sweeps * sites per run
        assert matched_annealing_runs(100, 16, 20, 1, 16) == 5
        assert matched_annealing_runs(1, 1, 1000, 1, 100) == 1


class TestResultTable:
    def test_roundtrip(self, tmp_path):
        t = ResultTable()
        t.add("xy", "smc", "lr", 10, 0, "log_z", 1.5)
        t.add("xy", "reference", "", None, None, "reference_log_z", 0.1 + 0.2)
        path = tmp_path / "res.csv"
        t.save(path)
        loaded = ResultTable.load(path)
        assert loaded.rows == t.rows

    def test_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            ResultTable.load(path)

    def test_filtering(self):
        t = ResultTable()
        t.add("xy", "smc", "lr", 10, 0, "log_z", 1.0)
        t.add("xy", "smc", "lr", 20, 0, "log_z", 2.0)
        t.add("xy", "ais", "", 10, 0, "log_z", 3.0)
        assert t.values(method="smc", n=20) == [2.0]
        assert t.values(method="ais") == [3.0]


class TestRunExperiment:
    def unb_cfg(self, workers=1, out=None):
        return ExperimentConfig(
            experiment="unbiased",
            master_seed=11,
            replicates=30,
            workers=workers,
            out=out,
            params={"size": "3x3", "particles": 32, "methods": ["smc", "ais", "asir"], "temps": 10},
        )

    def test_unbiased_has_check_rows(self):
        table = run_experiment(self.unb_cfg())
        checks = table.values(metric="within_3se")
        assert len(checks) == 3
        assert min(checks) == 1.0

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_experiment(self.unb_cfg(out=str(a)))
        run_experiment(self.unb_cfg(out=str(b)))
        assert a.read_bytes() == b.read_bytes()

    def test_worker_count_does_not_change_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_experiment(self.unb_cfg(workers=1, out=str(a)))
        run_experiment(self.unb_cfg(workers=3, out=str(b)))
        assert a.read_bytes() == b.read_bytes()

    def test_xy_experiment_rows(self):
        cfg = ExperimentConfig(
            experiment="xy",
            master_seed=3,
            replicates=3,
            params={
                "size": "3x3",
                "beta": 0.9,
                "orderings": ["lr", "spiral"],
                "n_grid": [16, 32],
                "reference_particles": 2000,
            },
        )
        table = run_experiment(cfg)
        assert len(table.values(metric="log_z", ordering="lr", n=16)) == 3
        assert len(table.values(metric="mse")) == 4
        assert len(table.values(metric="reference_log_z")) == 1

    def test_acf_experiment_rows(self):
        cfg = ExperimentConfig(
            experiment="acf",
            master_seed=4,
            params={
                "size": "4x4",
                "samplers": ["gibbs", "tree"],
                "iterations": 600,
                "track": 5,
                "max_lag": 8,
                "particles": 8,
            },
        )
        table = run_experiment(cfg)
        for sampler in ("gibbs", "tree"):
            assert table.values(metric="acf_lag_0", method=sampler)[0] == pytest.approx(1.0, abs=0.2)
            assert len([r for r in table.rows if r[1] == sampler and r[5].startswith("acf_lag_")]) == 9

    def test_gmrf_chain_rows(self):
        cfg = ExperimentConfig(
            experiment="gmrf",
            master_seed=5,
            params={"size": "4x4", "sampler": "tree", "iterations": 50, "track": 3},
        )
        table = run_experiment(cfg)
        assert len(table.values(metric="x_3", method="tree")) == 50

    def test_lda_experiment_rows(self):
        cfg = ExperimentConfig(
            experiment="lda",
            master_seed=6,
            replicates=4,
            params={"topics": 3, "vocab": 6, "n_docs": 2, "doc_len": 4, "particles": 16, "bootstrap": 200},
        )
        table = run_experiment(cfg)
        assert len(table.values(metric="log_lik", method="smc", ordering="doc0")) == 4
        assert len(table.values(metric="log_lik", method="exact")) == 2
        assert len(table.values(metric="boot_mean")) == 4

    def test_unknown_experiment(self):
        with pytest.raises(ValueError):
            run_experiment(ExperimentConfig(experiment="nope"))


class TestCLI:
    def test_unbiased_subcommand_exit_code(self, tmp_path):
        out = tmp_path / "r.csv"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "graphsmc.cli",
                "unbiased",
                "--size",
                "3x3",
                "--replicates",
                "25",
                "--particles",
                "32",
                "--seed",
                "2",
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "PASS" in proc.stdout
        assert out.exists()

    def test_xy_subcommand_writes_csv(self, tmp_path):
        out = tmp_path / "xy.csv"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "graphsmc.cli",
                "xy",
                "--size",
                "3x3",
                "--replicates",
                "2",
                "--particles",
                "16",
                "--ordering",
                "lr",
                "--seed",
                "1",
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        table = ResultTable.load(out)
        assert table.values(metric="log_z", n=16)

    def test_explicit_ordering_file(self, tmp_path):
        order_file = tmp_path / "order.txt"
        order_file.write_text(" ".join(str(i) for i in range(9)))
        out = tmp_path / "xy.csv"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "graphsmc.cli",
                "xy",
                "--size",
                "3x3",
                "--replicates",
                "1",
                "--particles",
                "8",
                "--ordering",
                f"explicit:{order_file}",
                "--seed",
                "1",
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
