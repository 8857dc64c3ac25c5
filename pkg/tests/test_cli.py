import json

import pytest

from kbsearch.cli import main

from fixtures import build_planted_fixture


@pytest.fixture(scope="module")
def fixture_files(tmp_path_factory, toy_kb, toy_kb_path):
    """A scripted agent file and a matching dataset over the toy KB."""
    base = tmp_path_factory.mktemp("cli_fixture")
    questions, script = build_planted_fixture(toy_kb, count=6, seed=41)
    script_path = base / "script.jsonl"
    script.save(str(script_path))
    dataset_path = base / "dataset.jsonl"
    with open(dataset_path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps({"id": q.qid, "question": q.question,
                                 "sparql": q.gold_sparql, "type": "toy"}) + "\n")
    config_path = base / "config.json"
    config_path.write_text(json.dumps({
        "n_agent": 3, "early_stop_k": 1, "max_simulations": 30, "seed": 7,
    }))
    return {"kb": toy_kb_path, "dataset": str(dataset_path),
            "script": str(script_path), "config": str(config_path),
            "questions": questions}


def run_cli(*argv):
    return main(list(argv))


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def test_search_with_scripted_agent(fixture_files, tmp_path):
    out = tmp_path / "run1"
    code = run_cli("search", "--kb", fixture_files["kb"],
                   "--dataset", fixture_files["dataset"],
                   "--config", fixture_files["config"],
                   "--agent", f"scripted:{fixture_files['script']}",
                   "--reward-mode", "random",
                   "--out", str(out))
    assert code == 0
    predictions = read_jsonl(out / "predictions.jsonl")
    assert len(predictions) == 6
    assert all(p["error"] is None for p in predictions)
    assert (out / "traces.jsonl").exists()
    assert (out / "report.csv").exists()
    assert (out / "report.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "search"
    assert manifest["config"]["early_stop_k"] == 1
    assert "config_digest" in manifest


def test_eval_on_gold_predictions(fixture_files, tmp_path):
    # predictions equal to gold must score a perfect report
    questions = fixture_files["questions"]
    preds_path = tmp_path / "gold_preds.jsonl"
    with open(preds_path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps({
                "id": q.qid, "type": "toy", "question": q.question,
                "answer": sorted(q.gold_answers),
                "terminal_predictions": [
                    {"node_id": 1, "sparql": "s", "answers": sorted(q.gold_answers),
                     "mean_reward": 1.0}],
                "gold_answers": sorted(q.gold_answers),
            }) + "\n")
    out = tmp_path / "eval_out"
    code = run_cli("eval", "--predictions", str(preds_path), "--out", str(out))
    assert code == 0
    report = (out / "report.csv").read_text().splitlines()
    overall = [line for line in report if line.startswith("overall")][0]
    assert overall.split(",")[2] == "1.000000"  # f1 column


def test_eval_computes_gold_from_dataset(fixture_files, tmp_path):
    questions = fixture_files["questions"]
    preds_path = tmp_path / "nogold.jsonl"
    with open(preds_path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps({
                "id": q.qid, "type": "toy", "question": q.question,
                "answer": sorted(q.gold_answers),
                "terminal_predictions": [], "gold_answers": None,
            }) + "\n")
    out = tmp_path / "eval_out2"
    code = run_cli("eval", "--predictions", str(preds_path),
                   "--dataset", fixture_files["dataset"],
                   "--kb", fixture_files["kb"], "--out", str(out))
    assert code == 0
    report = (out / "report.csv").read_text()
    assert "overall" in report


def test_baseline_strategies_run(fixture_files, tmp_path):
    for strategy in ("bfs", "linear"):
        out = tmp_path / f"base_{strategy}"
        code = run_cli("baseline", "--strategy", strategy,
                       "--kb", fixture_files["kb"],
                       "--dataset", fixture_files["dataset"],
                       "--config", fixture_files["config"],
                       "--agent", f"scripted:{fixture_files['script']}",
                       "--out", str(out))
        assert code == 0
        predictions = read_jsonl(out / "predictions.jsonl")
        assert all(p["strategy"] == strategy for p in predictions)


def test_annotate_command(fixture_files, tmp_path):
    out = tmp_path / "ann"
    code = run_cli("annotate", "--kb", fixture_files["kb"],
                   "--dataset", fixture_files["dataset"],
                   "--config", fixture_files["config"],
                   "--agent", f"scripted:{fixture_files['script']}",
                   "--reward-mode", "random",
                   "--out", str(out))
    assert code == 0
    lines = (out / "training.jsonl").read_text().splitlines()
    manifest = json.loads(lines[0])
    assert manifest["kind"] == "manifest"
    assert manifest["count"] == len(lines) - 1
    skips = (out / "skips.csv").read_text().splitlines()
    assert skips[0] == "id,reason"
    assert manifest["count"] + (len(skips) - 1) == 6


def test_reward_stats_command(fixture_files, tmp_path):
    search_out = tmp_path / "run_for_stats"
    run_cli("search", "--kb", fixture_files["kb"],
            "--dataset", fixture_files["dataset"],
            "--config", fixture_files["config"],
            "--agent", f"scripted:{fixture_files['script']}",
            "--reward-mode", "random",
            "--out", str(search_out))
    # random mode draws no samples, so synthesize a trace with samples
    traces_path = tmp_path / "traces.jsonl"
    with open(traces_path, "w", encoding="utf-8") as fh:
        for depth, values in [(1, [0.4, 0.6]), (1, [0.2, 0.8]), (2, [0.5, 0.5]),
                              (2, [0.9])]:
            fh.write(json.dumps({"depth": depth,
                                 "reward_samples": [{"value": v} for v in values]}) + "\n")
    out = tmp_path / "stats"
    code = run_cli("reward-stats", "--traces", str(traces_path), "--out", str(out))
    assert code == 0
    rows = (out / "stability.csv").read_text().splitlines()
    assert rows[0] == "depth,node_count,mean_std"
    assert rows[1] == "1,2,0.200000"
    assert rows[2] == "2,1,0.000000"
    assert (out / "stability.png").exists()


def test_config_errors_listed_exhaustively(fixture_files, tmp_path, capsys):
    bad_config = tmp_path / "bad.json"
    bad_config.write_text(json.dumps({
        "early_stop_k": 0, "depth_penalty": 3.0, "mystery_key": 1,
        "reward_mode": "psychic",
    }))
    code = run_cli("search", "--kb", fixture_files["kb"],
                   "--dataset", fixture_files["dataset"],
                   "--config", str(bad_config),
                   "--agent", f"scripted:{fixture_files['script']}",
                   "--out", str(tmp_path / "never"))
    assert code == 2
    err = capsys.readouterr().err
    assert "early_stop_k" in err and "depth_penalty" in err
    assert "mystery_key" in err and "reward_mode" in err
    assert not (tmp_path / "never").exists()


def test_rule_mode_without_endpoint_fails_per_question(fixture_files, tmp_path):
    out = tmp_path / "rule_fail"
    code = run_cli("search", "--kb", fixture_files["kb"],
                   "--dataset", fixture_files["dataset"],
                   "--config", fixture_files["config"],
                   "--agent", f"scripted:{fixture_files['script']}",
                   "--out", str(out))
    assert code == 0  # per-question failures never abort the run
    predictions = read_jsonl(out / "predictions.jsonl")
    assert all(p["error"] is not None for p in predictions)
    assert all("reward_endpoint" in p["error"] for p in predictions)


def test_seeded_runs_are_byte_identical(fixture_files, tmp_path):
    outs = []
    for name in ("det_a", "det_b"):
        out = tmp_path / name
        code = run_cli("search", "--kb", fixture_files["kb"],
                       "--dataset", fixture_files["dataset"],
                       "--config", fixture_files["config"],
                       "--agent", f"scripted:{fixture_files['script']}",
                       "--reward-mode", "random", "--seed", "99",
                       "--out", str(out))
        assert code == 0
        outs.append(out)
    for filename in ("predictions.jsonl", "traces.jsonl", "report.csv"):
        a = (outs[0] / filename).read_bytes()
        b = (outs[1] / filename).read_bytes()
        assert a == b, filename


def test_workers_do_not_change_output(fixture_files, tmp_path):
    outs = []
    for name, workers in (("w1", "1"), ("w3", "3")):
        out = tmp_path / name
        run_cli("search", "--kb", fixture_files["kb"],
                "--dataset", fixture_files["dataset"],
                "--config", fixture_files["config"],
                "--agent", f"scripted:{fixture_files['script']}",
                "--reward-mode", "random", "--seed", "5", "--workers", workers,
                "--out", str(out))
        outs.append(out)
    assert (outs[0] / "predictions.jsonl").read_bytes() == \
        (outs[1] / "predictions.jsonl").read_bytes()
    assert (outs[0] / "traces.jsonl").read_bytes() == \
        (outs[1] / "traces.jsonl").read_bytes()
