"""Command-line harness: subcommands, exit codes, reproducibility."""

import numpy as np
import pytest

from riemgrid.cli import main
from riemgrid.fileio import write_field
from riemgrid.grid import GridSpec, constant_metric, identity_metric


@pytest.fixture(scope="module")
def example_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("examples")
    code = main(["--grid", "16", "--seed", "7", "--out", str(out), "gen-examples"])
    assert code == 0
    return out


def test_gen_examples_writes_inputs(example_dir):
    names = {p.name for p in example_dir.iterdir()}
    assert {"gamma.rgf", "s.rgf", "x.rgf", "h0.rgf", "g.rgf"} <= names
    assert len([n for n in names if n.startswith("path_")]) == 6


def test_project_subcommand(example_dir, tmp_path):
    out = tmp_path / "out"
    code = main(["--in", str(example_dir), "--out", str(out), "project"])
    assert code == 0
    assert (out / "x.rgf").exists() and (out / "h.rgf").exists()


def test_exp_log_subcommands(example_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["--in", str(example_dir), "--out", str(out), "exp"]) == 0
    assert (out / "endpoint.rgf").exists()
    assert main(["--in", str(example_dir), "log"]) == 0


def test_decompose_subcommand(example_dir, tmp_path):
    report = tmp_path / "dec.txt"
    code = main(["--in", str(example_dir), "--report", str(report), "decompose"])
    assert code == 0
    text = report.read_text()
    assert "residual =" in text
    assert "h_divergence_defect =" in text
    assert "iterations =" in text
    assert "pass = true" in text


def test_lift_subcommand(example_dir, tmp_path):
    out = tmp_path / "lifted"
    code = main(["--in", str(example_dir), "--out", str(out), "lift"])
    assert code == 0
    assert (out / "lifted_05.rgf").exists() and (out / "gauge_05.rgf").exists()


def test_isometries_subcommand(example_dir):
    assert main(["--in", str(example_dir), "isometries"]) == 0


def test_finite_demo_subcommand():
    assert main(["finite-demo"]) == 0


def test_convergence_subcommand():
    assert main(["convergence"]) == 0


def test_usage_error_missing_inputs(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["--in", str(empty), "project"]) == 2


def test_usage_error_bad_flags():
    assert main(["--grid", "2", "finite-demo"]) == 2
    assert main(["--tol-ode", "-1", "finite-demo"]) == 2
    assert main(["--seed", "-3", "finite-demo"]) == 2


def test_numerical_error_exit_code(tmp_path):
    src = tmp_path / "far"
    src.mkdir()
    spec = GridSpec(16)
    write_field(src / "gamma.rgf", identity_metric(spec))
    write_field(src / "g.rgf", constant_metric(spec, 2.5 * np.eye(2)))
    assert main(["--in", str(src), "decompose"]) == 3


def test_reports_reproducible(example_dir, tmp_path):
    r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
    assert main(["--in", str(example_dir), "--report", str(r1), "project"]) == 0
    assert main(["--in", str(example_dir), "--report", str(r2), "project"]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_gen_examples_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--grid", "16", "--seed", "3", "--out", str(a), "gen-examples"]) == 0
    assert main(["--grid", "16", "--seed", "3", "--out", str(b), "gen-examples"]) == 0
    for name in ("gamma.rgf", "s.rgf", "g.rgf", "path_03.rgf"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
