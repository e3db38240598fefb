"""End-to-end tests for the command-line interface."""

import json
import logging
from pathlib import Path

import pytest
import yaml

from chainverifier.main import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, run
from chainverifier.models import VerdictReport

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def restore_root_logger():
    """run() reconfigures the root logger; put the previous handlers back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def _write_config(tmp_path, data) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _density_config(threshold=None):
    section = {
        "states": [[0.0]],
        "samples": 10000,
        "bins": 20,
        "range": [-4.0, 4.0],
        "trajectory": {"x0": [0.0], "steps": 5},
        "seed": 1,
    }
    if threshold is not None:
        section["threshold"] = threshold
    return {"model": {"kind": "random-walk", "n": 1}, "density_check": section}


def test_paths_writes_report(tmp_path):
    """paths with --out writes paths_report.json and exits 0."""
    code = run(["paths", "--config", str(CONFIG_DIR / "random_walk.yaml"), "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "paths_report.json").read_text())
    [result] = report["results"]
    assert result["found"]
    assert result["certificate"]["sequence"] == [[0.0], [0.0], [-5.0]]


def test_analyze_random_walk_is_aperiodic(tmp_path):
    """The random walk gets the strongest conclusion."""
    code = run(["analyze", "--config", str(CONFIG_DIR / "random_walk.yaml"), "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "analyze_report.json").read_text())
    assert report["verdict"]["conclusion"] == "aperiodic-phi-irreducible-T-chain"
    assert report["verdict"]["small_sets"] == "every compact set is small"
    assert report["returns"]["gcd"] == 1
    assert report["config"]["analysis"]["seed"] == 11


def test_analyze_frozen_chain_is_inconclusive(tmp_path):
    """No certificate exists for a control-ignoring chain: exit 2."""
    code = run(["analyze", "--config", str(CONFIG_DIR / "frozen.yaml"), "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_INCONCLUSIVE
    report = json.loads((tmp_path / "analyze_report.json").read_text())
    assert report["verdict"]["conclusion"] == "inconclusive"
    assert report["globally_result"]["status"] == "failed"


def test_analyze_stdout_is_reproducible(capsys):
    """Two runs differ only in wall_clock_seconds."""
    reports = []
    for _ in range(2):
        assert run(["analyze", "--config", str(CONFIG_DIR / "random_walk.yaml"), "--quiet"]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        report.pop("wall_clock_seconds")
        reports.append(report)
    assert reports[0] == reports[1]


@pytest.mark.parametrize("config_name", ["random_walk.yaml", "frozen.yaml"])
def test_verdict_report_round_trips(tmp_path, config_name):
    """The written analyze report parses back into an equal VerdictReport and serializes identically."""
    run(["analyze", "--config", str(CONFIG_DIR / config_name), "--out", str(tmp_path), "--quiet"])
    text = (tmp_path / "analyze_report.json").read_text()
    report = VerdictReport.model_validate_json(text)
    assert report.model_dump_json(indent=2) + "\n" == text
    assert VerdictReport.model_validate_json(report.model_dump_json()) == report


def test_seed_override_is_echoed(tmp_path):
    """--seed-override replaces the configured seed."""
    code = run(["paths", "--config", str(CONFIG_DIR / "random_walk.yaml"), "--out", str(tmp_path),
                "--seed-override", "123", "--quiet"])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "paths_report.json").read_text())
    assert report["config"]["paths"]["seed"] == 123


def test_invalid_config_exits_1(tmp_path, capsys):
    """Validation errors name the field and exit 1."""
    data = {"model": {"kind": "random-walk", "colour": "blue"}}
    code = run(["analyze", "--config", _write_config(tmp_path, data), "--quiet"])
    assert code == EXIT_ERROR
    assert "model.colour" in capsys.readouterr().err


def test_missing_section_exits_1(tmp_path, capsys):
    """analyze without an analysis section is a config error."""
    code = run(["analyze", "--config", _write_config(tmp_path, {"model": {"kind": "random-walk"}}), "--quiet"])
    assert code == EXIT_ERROR
    assert "Missing config section: analysis" in capsys.readouterr().err


def test_bad_external_params_exit_1(tmp_path, capsys):
    """Parameters the external factory rejects are reported against model.params."""
    data = {
        "model": {"kind": "external", "factory": "chainverifier.toy_models:frozen_chain", "params": {"size": 1}},
        "paths": {"queries": [{"y": [1.0], "center": [0.0], "radius": 0.5, "k": 1}], "seed": 0},
    }
    code = run(["paths", "--config", _write_config(tmp_path, data), "--quiet"])
    assert code == EXIT_ERROR
    assert "model.params" in capsys.readouterr().err


def test_rate_needs_xnes_model(tmp_path, capsys):
    """rate on a random walk exits 1."""
    data = {"model": {"kind": "random-walk"}, "rate": {"x0": [1.0], "iterations": 100, "seed": 0}}
    code = run(["rate", "--config", _write_config(tmp_path, data), "--quiet"])
    assert code == EXIT_ERROR
    assert "xnes" in capsys.readouterr().err


def test_check_density_writes_tables(tmp_path):
    """Histogram and trajectory CSV files land next to the JSON report."""
    out = tmp_path / "out"
    code = run(["check-density", "--config", _write_config(tmp_path, _density_config()), "--out", str(out),
                "--quiet"])
    assert code == EXIT_OK
    histogram = (out / "histogram_0.csv").read_text().splitlines()
    assert histogram[0] == "left,right,count,empirical,analytic"
    assert len(histogram) == 21
    assert len((out / "trajectory.csv").read_text().splitlines()) == 7
    report = json.loads((out / "density_report.json").read_text())
    assert report["all_passed"] is None


def test_check_density_failure_exits_2(tmp_path):
    """A threshold no histogram can meet exits 2."""
    code = run(["check-density", "--config", _write_config(tmp_path, _density_config(threshold=1e-6)),
                "--out", str(tmp_path / "out"), "--quiet"])
    assert code == 2


@pytest.mark.slow
def test_analyze_xnes_sphere(tmp_path):
    """xNES on the sphere, n=3: rank at 0 plus steadily attracting 0."""
    code = run(["analyze", "--config", str(CONFIG_DIR / "xnes_sphere.yaml"), "--out", str(tmp_path), "--quiet"])
    report = json.loads((tmp_path / "analyze_report.json").read_text())
    assert report["verdict"]["rank_ok"]
    assert report["verdict"]["conclusion"] == "aperiodic-phi-irreducible-T-chain"
    assert code == EXIT_OK


@pytest.mark.slow
def test_rate_xnes_sphere(tmp_path):
    """Route A is negative on the sphere."""
    code = run(["rate", "--config", str(CONFIG_DIR / "xnes_sphere.yaml"), "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    rate = json.loads((tmp_path / "rate_report.json").read_text())["rate"]
    assert rate["per_iteration_log_step_ratio"] < 0
