import json

import pytest

from threatcast.cli import main

import pipeline


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    cfg = pipeline.write_workspace(root)
    codes = {tuple(stage): main(stage + ["--config", str(cfg)]) for stage in pipeline.STAGES}
    return root, cfg, codes


def test_every_stage_succeeds(workspace):
    _, _, codes = workspace
    assert {s: c for s, c in codes.items() if c != 0} == {}


def test_stage_layout_and_manifest(workspace):
    root, cfg, _ = workspace
    out = root / "out"
    m = pipeline.read_json(out / "train-severity-cnn" / "manifest.json")
    assert m["stage"] == "train-severity-cnn" and m["seed"] == 7
    assert m["command"] == ["train", "severity", "--model", "cnn"]
    assert set(m["outputs"]) >= {"model.bin", "vocab.tsv", "scores-dev.csv", "scores-test.csv", "metrics.json"}
    assert "corpus" in m["inputs"] and len(m["config_sha256"]) == 64
    assert "timestamp" not in json.dumps(m)
    for name in ("forecast-rank-model/ranking.csv", "forecast-rank-model/tweet_scores.csv",
                 "forecast-eval-model/precision_at_k.png", "eval-pr-severity/pr.png",
                 "insights-temporal/leads.png", "insights-temporal/delays.json",
                 "link-build/links.csv", "link-build/filtered.csv", "insights-accounts/accounts.csv"):
        assert (out / name).is_file(), name
    assert not list(out.glob(".*.partial"))


def test_dedup_and_worker_filter_effects(workspace):
    out = workspace[0] / "out"
    assert pipeline.read_json(out / "corpus-dedup" / "summary.json")["after_jaccard"] == 60
    assert pipeline.read_json(out / "annotate-filter-workers" / "summary.json")["removed_workers"] == ["spam"]


def test_page_linked_tweet_found(workspace):
    links = (workspace[0] / "out" / "link-build" / "links.csv").read_text()
    assert "CVE-2016-9001,fpage,2016-08-01T00:00:00Z,page" in links


def test_rerun_from_manifest(workspace):
    root, _, _ = workspace
    out = root / "out"
    before = (out / "forecast-rank-volume" / "ranking.csv").read_bytes()
    assert main(["forecast", "rank", "--scorer", "volume", "--config",
                 str(out / "forecast-rank-volume" / "manifest.json")]) == 0
    assert (out / "forecast-rank-volume" / "ranking.csv").read_bytes() == before


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main([]) == 2
    assert main(["train", "severity", "--model", "svm"]) == 2
    assert main(["corpus", "ingest", "--config", str(tmp_path / "absent.ini")]) == 2
    assert main(["corpus", "ingest", "--set", "run.bogus=1"]) == 2
    assert main(["corpus", "ingest", "--output", str(tmp_path)]) == 2  # paths.corpus unset
    assert "configuration error" in capsys.readouterr().err


def test_missing_upstream_is_config_error(tmp_path):
    assert main(["forecast", "rank", "--scorer", "volume", "--output", str(tmp_path)]) == 2


def test_runtime_failure_exit_1_leaves_no_partial_output(tmp_path):
    bad = tmp_path / "corpus.jsonl"
    bad.write_text('{"id": "1", "created_at": "not a date"}\n')
    code = main(["corpus", "ingest", "--set", f"paths.corpus={bad}", "--output", str(tmp_path / "out")])
    assert code == 1
    assert not (tmp_path / "out" / "corpus-ingest").exists()
    assert not list((tmp_path / "out").glob(".*"))


def test_failed_rerun_keeps_previous_output(tmp_path):
    good = tmp_path / "corpus.jsonl"
    good.write_text('{"id": "1", "created_at": "2016-01-01T00:00:00Z", "text": "hi"}\n')
    args = ["corpus", "ingest", "--set", f"paths.corpus={good}", "--output", str(tmp_path / "out")]
    assert main(args) == 0
    kept = (tmp_path / "out" / "corpus-ingest" / "tweets.jsonl").read_bytes()
    good.write_text("garbage\n")
    assert main(args) == 1
    assert (tmp_path / "out" / "corpus-ingest" / "tweets.jsonl").read_bytes() == kept
