"""CLI behavior: argument plumbing, output, and exit codes."""

import json

import pytest
from click.testing import CliRunner
from conftest import make_edf

from plethpipe.cli import main
from plethpipe.signal_io import Activity, Gene


@pytest.fixture(scope="module")
def runner():
    return CliRunner()  # click >= 8.2 always captures stderr separately


@pytest.fixture(scope="module")
def corpus(tmp_path_factory, runner):
    root = tmp_path_factory.mktemp("cli_corpus")
    make_edf(root / "a.edf", "a", Activity.MIDACTIVE, Gene.GENE59,
             seed=31, base_rate=2.0, duration=20.0)
    make_edf(root / "b.edf", "b", Activity.MIDREST, Gene.GENE59,
             seed=32, base_rate=2.4, duration=20.0)
    result = runner.invoke(main, [
        "ingest", str(root / "a.edf"), str(root / "b.edf"),
        "--out", str(root / "out"),
    ])
    assert result.exit_code == 0, result.output + str(result.stderr)
    return {"root": root, "db": str(root / "out" / "breaths.csv")}


def test_ingest_reports_and_writes(corpus):
    from plethpipe.reports import read_breath_database
    frame = read_breath_database(corpus["db"])
    assert len(frame) > 0
    assert set(frame["subject_id"]) == {"a", "b"}


def test_ingest_without_files_exits_2(runner, tmp_path):
    result = runner.invoke(main, ["ingest", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "no input" in result.stderr


def test_ingest_missing_file_exits_3(runner, tmp_path):
    result = runner.invoke(main, [
        "ingest", str(tmp_path / "ghost.edf"), "--out", str(tmp_path),
    ])
    assert result.exit_code == 3
    assert "cannot read" in result.stderr


def test_ingest_threshold_flags_are_forwarded(runner, corpus, tmp_path):
    result = runner.invoke(main, [
        "ingest", str(corpus["root"] / "a.edf"),
        "--out", str(tmp_path / "out"),
        "--sap-threshold", "4.5", "--sap-symmetric",
        "--duration-min", "0.2", "--min-dev-max", "-0.01",
    ])
    assert result.exit_code == 0, result.stderr
    with open(tmp_path / "out" / "ingest_manifest.json") as fh:
        params = json.load(fh)["parameters"]
    assert params["sap_threshold"] == 4.5
    assert params["sap_symmetric"] is True
    assert params["duration_min_s"] == 0.2
    assert params["min_dev_max"] == -0.01


def test_compare_prints_each_metric(runner, corpus, tmp_path):
    result = runner.invoke(main, [
        "compare", corpus["db"], "--comparison", "activity",
        "--test", "ks", "--out", str(tmp_path / "cmp"),
    ])
    assert result.exit_code == 0, result.stderr
    assert "duration_s" in result.output
    assert "Penh" in result.output
    assert "p=" in result.output
    assert (tmp_path / "cmp" / "comparison.csv").exists()


def test_compare_rejects_unknown_comparison(runner, corpus, tmp_path):
    result = runner.invoke(main, [
        "compare", corpus["db"], "--comparison", "weather",
        "--out", str(tmp_path),
    ])
    assert result.exit_code == 2  # click validates the choice itself


def test_compare_single_category_exits_4(runner, corpus, tmp_path):
    result = runner.invoke(main, [
        "compare", corpus["db"], "--comparison", "genetic",
        "--out", str(tmp_path / "cmp"),
    ])
    assert result.exit_code == 4
    assert "genetic" in result.stderr


def test_sigh_zero_detections_warns(runner, corpus, tmp_path):
    config = tmp_path / "rest.json"
    config.write_text(json.dumps({
        "a": {"windows": [[0.0, 19.0]], "pep_threshold": 99.0,
              "unit": "seconds"},
    }))
    result = runner.invoke(main, [
        "sigh", corpus["db"], "--rest-config", str(config),
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == 0, result.stderr
    assert "warning: no sigh sequences" in result.stderr
    assert "0 sighs analyzed" in result.output


def test_sigh_bad_config_exits_3(runner, corpus, tmp_path):
    config = tmp_path / "rest.json"
    config.write_text("{not json")
    result = runner.invoke(main, [
        "sigh", corpus["db"], "--rest-config", str(config),
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == 3


def test_synth_writes_outputs(runner, tmp_path):
    profile = tmp_path / "profile.json"
    profile.write_text(json.dumps({
        "seed": 9, "duration_s": 5.0, "base_rate_hz": 2.0,
        "sample_rate_hz": 400.0,
    }))
    result = runner.invoke(main, [
        "synth", str(profile),
        "--out-edf", str(tmp_path / "s.edf"),
        "--out-truth", str(tmp_path / "t.csv"),
    ])
    assert result.exit_code == 0, result.stderr
    assert (tmp_path / "s.edf").exists()
    assert (tmp_path / "t.csv").exists()
    assert "breaths" in result.output


def test_synth_invalid_profile_exits_2(runner, tmp_path):
    profile = tmp_path / "profile.json"
    profile.write_text(json.dumps({"seed": 9, "duration_s": -5.0,
                                   "base_rate_hz": 2.0}))
    result = runner.invoke(main, [
        "synth", str(profile),
        "--out-edf", str(tmp_path / "s.edf"),
        "--out-truth", str(tmp_path / "t.csv"),
    ])
    assert result.exit_code == 2


def test_help_screens(runner):
    assert runner.invoke(main, ["--help"]).exit_code == 0
    for command in ("ingest", "compare", "sigh", "synth", "serve"):
        result = runner.invoke(main, [command, "--help"])
        assert result.exit_code == 0, command


def test_unreachable_server_exits_1(runner, tmp_path):
    result = runner.invoke(main, [
        "--server", "http://127.0.0.1:1",
        "ingest", "x.edf", "--out", str(tmp_path),
    ])
    assert result.exit_code == 1
    assert "cannot reach service" in result.stderr
