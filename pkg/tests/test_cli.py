"""Command line flow: synth, ingest, simulate, report, config handling."""
import json

import pytest
from click.testing import CliRunner

from claimcheck.cli import main

PROFILE = {
    "counts": {"relations": 2, "keys": 3, "attributes": 3,
               "formulas": 2, "claims": 8, "sections": 2},
    "frequency_percentiles": {
        "relation": {"50": 1}, "key_value": {"50": 1},
        "attribute": {"50": 1}, "formula": {"50": 1},
    },
    "explicit_fraction": 0.5,
    "error_rate": 0.0,
}


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, runner):
    root = tmp_path_factory.mktemp("cli")
    profile_path = root / "profile.json"
    profile_path.write_text(json.dumps(PROFILE), encoding="utf-8")
    out = root / "corpus"
    result = runner.invoke(main, ["synth", "--profile", str(profile_path),
                                  "--seed", "4", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "wrote 8 claims" in result.output
    return out


def test_ingest_summarizes_the_corpus(runner, corpus_dir):
    result = runner.invoke(main, ["ingest", str(corpus_dir)])
    assert result.exit_code == 0, result.output
    assert "claims: 8" in result.output
    assert "annotated: 8" in result.output


def test_ingest_missing_directory_fails(runner, tmp_path):
    result = runner.invoke(main, ["ingest", str(tmp_path / "absent")])
    assert result.exit_code != 0


def test_unknown_profile_lists_bundled_names(runner, tmp_path):
    result = runner.invoke(main, ["synth", "--profile", "atlantis",
                                  "--out", str(tmp_path / "x")])
    assert result.exit_code != 0
    assert "table1_div10" in result.output


def test_simulate_manual_prints_the_closed_form(runner, corpus_dir, tmp_path):
    result = runner.invoke(main, ["simulate", str(corpus_dir),
                                  "--mode", "manual",
                                  "--out", str(tmp_path / "r")])
    assert result.exit_code == 0, result.output
    # 8 claims at 170s each plus 2 sections at 60s
    assert 8 * 170.0 + 2 * 60.0 == 1480.0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["total_seconds"] == 1480.0
    assert report["manual_seconds"] == 1480.0
    assert "savings vs manual: 0.0%" in result.output


def test_simulate_scrutinizer_saves_and_writes_series(runner, corpus_dir,
                                                      tmp_path):
    out = tmp_path / "r"
    result = runner.invoke(main, ["simulate", str(corpus_dir),
                                  "--mode", "scrutinizer", "--seed", "0",
                                  "--epochs", "60", "--embedding-dim", "16",
                                  "--word-vocab", "100", "--char-vocab", "100",
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "savings vs manual:" in result.output
    assert "verdict agreement: 100.0%" in result.output
    report = json.loads((out / "report.json").read_text())
    assert report["mode"] == "scrutinizer"
    assert report["resolved"] == 8
    assert report["total_seconds"] < report["manual_seconds"]
    accuracy = (out / "accuracy.csv").read_text().splitlines()
    assert accuracy[0] == "batch,relation,key_value,attribute,formula,average"
    assert len(accuracy) == 1 + report["batches"]
    topk = (out / "topk.csv").read_text().splitlines()
    assert [row.split(",")[0] for row in topk[1:]] == ["1", "5", "10", "15"]

    rendered = runner.invoke(main, ["report", str(out)])
    assert rendered.exit_code == 0, rendered.output
    assert "scrutinizer" in rendered.output


def test_simulate_is_deterministic_under_a_seed(runner, corpus_dir, tmp_path):
    args = ["simulate", str(corpus_dir), "--mode", "scrutinizer",
            "--seed", "3", "--epochs", "60", "--embedding-dim", "16",
            "--word-vocab", "100", "--char-vocab", "100"]
    first = runner.invoke(main, [*args, "--out", str(tmp_path / "a")])
    second = runner.invoke(main, [*args, "--out", str(tmp_path / "b")])
    assert first.exit_code == second.exit_code == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    a.pop("computation_seconds")
    b.pop("computation_seconds")
    assert a == b


def test_scrutinizer_is_an_alias_for_optimized(runner, corpus_dir, tmp_path):
    shared = ["--seed", "0", "--epochs", "60", "--embedding-dim", "16",
              "--word-vocab", "100", "--char-vocab", "100"]
    alias = runner.invoke(main, ["simulate", str(corpus_dir),
                                 "--mode", "scrutinizer", *shared,
                                 "--out", str(tmp_path / "a")])
    plain = runner.invoke(main, ["simulate", str(corpus_dir),
                                 "--mode", "optimized", *shared,
                                 "--out", str(tmp_path / "b")])
    assert alias.exit_code == plain.exit_code == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["total_seconds"] == b["total_seconds"]
    assert a["results"] == b["results"]


def test_config_file_applies_and_flags_win(runner, corpus_dir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "batch": {"batch_size": 5},
        "models": {"epochs": 60, "embedding_dim": 16,
                   "word_vocab": 100, "char_vocab": 100},
        "checkers": {"count": 3, "seed": 0},
    }), encoding="utf-8")
    from_file = runner.invoke(main, ["simulate", str(corpus_dir),
                                     "--mode", "sequential",
                                     "--config", str(config),
                                     "--out", str(tmp_path / "file")])
    assert from_file.exit_code == 0, from_file.output
    # 8 claims in batches of 5 -> 2 batches
    report = json.loads((tmp_path / "file" / "report.json").read_text())
    assert report["batches"] == 2

    overridden = runner.invoke(main, ["simulate", str(corpus_dir),
                                      "--mode", "sequential",
                                      "--config", str(config),
                                      "--batch-size", "3",
                                      "--out", str(tmp_path / "flag")])
    assert overridden.exit_code == 0, overridden.output
    report = json.loads((tmp_path / "flag" / "report.json").read_text())
    assert report["batches"] == 3


def test_config_file_rejects_unknown_keys(runner, corpus_dir, tmp_path):
    bad_section = tmp_path / "bad1.json"
    bad_section.write_text(json.dumps({"warp": {}}), encoding="utf-8")
    result = runner.invoke(main, ["simulate", str(corpus_dir),
                                  "--config", str(bad_section)])
    assert result.exit_code != 0
    assert "unknown config section" in result.output

    bad_key = tmp_path / "bad2.json"
    bad_key.write_text(json.dumps({"batch": {"sizee": 5}}), encoding="utf-8")
    result = runner.invoke(main, ["simulate", str(corpus_dir),
                                  "--config", str(bad_key)])
    assert result.exit_code != 0
    assert "unknown key" in result.output


def test_train_reports_per_kind_fit(runner, corpus_dir):
    result = runner.invoke(main, ["train", str(corpus_dir),
                                  "--epochs", "60", "--embedding-dim", "16"])
    assert result.exit_code == 0, result.output
    for kind in ("relation", "key_value", "attribute", "formula"):
        assert kind in result.output
    assert "fingerprint:" in result.output


def test_report_fails_cleanly_without_a_report(runner, tmp_path):
    result = runner.invoke(main, ["report", str(tmp_path)])
    assert result.exit_code != 0
    assert "cannot read" in result.output
