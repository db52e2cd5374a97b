import os
import subprocess
import sys

import pytest

from smcplots import PlotSpec, SchemaError, render

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

# frozen from the pinned fixture CSVs (master seed 12345)
GOLDEN = [
    ("mse_lines", "xy_results.csv", 640, 480, "a0f0597e31fa8f6e7bdac193f3e7d02bc7312ca46f3de1d068c71a79d863021f"),
    ("boxplot", "unbiased_results.csv", 640, 480, "eba221ebc2b5503e57e7c2e1f2d2b6a1a92897dad9dcea93dec2c1276924b9a1"),
    ("acf", "acf_results.csv", 640, 480, "488183a1b920dc860801358feb04111e27969957760fa7f9db8490dcd5b49eac"),
    ("loglik_bars", "lda_results.csv", 640, 480, "7f6d7e262a66a4c0d3d22a2a29b36dda30eaee55aaf6951a0bbdd4d3f4c1f1c4"),
]


@pytest.mark.parametrize("kind,fixture,width,height,checksum", GOLDEN)
def test_golden_series(kind, fixture, width, height, checksum, tmp_path):
    out = tmp_path / f"{kind}.png"
    result = render(PlotSpec(kind, os.path.join(FIXTURES, fixture), str(out)))
    assert out.exists() and out.stat().st_size > 0
    assert (result.width_px, result.height_px) == (width, height)
    assert result.checksum == checksum


@pytest.mark.parametrize("kind,fixture,width,height,checksum", GOLDEN)
def test_rendering_is_deterministic(kind, fixture, width, height, checksum, tmp_path):
    spec = PlotSpec(kind, os.path.join(FIXTURES, fixture), str(tmp_path / "a.png"))
    again = PlotSpec(kind, os.path.join(FIXTURES, fixture), str(tmp_path / "b.png"))
    assert render(spec).checksum == render(again).checksum


@pytest.mark.parametrize("kind", ["mse_lines", "boxplot", "acf", "loglik_bars"])
def test_empty_but_valid_csv(kind, tmp_path):
    out = tmp_path / "empty.png"
    result = render(PlotSpec(kind, os.path.join(FIXTURES, "empty_results.csv"), str(out)))
    assert out.exists()
    assert result.series == {}


def test_acf_curves_start_at_one(tmp_path):
    result = render(
        PlotSpec("acf", os.path.join(FIXTURES, "acf_results.csv"), str(tmp_path / "acf.png"))
    )
    for label, (x, y) in result.series.items():
        assert x[0] == 0.0
        assert y[0] == pytest.approx(1.0, abs=0.15), label


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        PlotSpec("pie", os.path.join(FIXTURES, "xy_results.csv"), str(tmp_path / "x.png"))


def test_schema_mismatch_names_problem(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# graphsmc-results v1\nexperiment,method,value\nxy,smc,1.0\n")
    with pytest.raises(SchemaError) as err:
        render(PlotSpec("mse_lines", str(bad), str(tmp_path / "x.png")))
    assert "missing columns" in str(err.value)


def test_foreign_csv_rejected(tmp_path):
    bad = tmp_path / "foreign.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        render(PlotSpec("acf", str(bad), str(tmp_path / "x.png")))


def test_missing_bootstrap_metric_raises(tmp_path):
    bad = tmp_path / "partial.csv"
    bad.write_text(
        "# graphsmc-results v1\n"
        "experiment,method,ordering,N,replicate,metric,value\n"
        "lda,smc,doc0,,,boot_mean,-3.5\n"
    )
    with pytest.raises(SchemaError) as err:
        render(PlotSpec("loglik_bars", str(bad), str(tmp_path / "x.png")))
    assert "boot_low" in str(err.value)


class TestCLI:
    def test_cli_renders(self, tmp_path):
        out = tmp_path / "fig.png"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "smcplots.cli",
                "--kind",
                "mse_lines",
                "--in",
                os.path.join(FIXTURES, "xy_results.csv"),
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_cli_schema_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("nope\n")
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "smcplots.cli",
                "--kind",
                "acf",
                "--in",
                str(bad),
                "--out",
                str(tmp_path / "x.png"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "error" in proc.stderr
