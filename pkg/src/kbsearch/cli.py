"""Batch experiment runner: search, baselines, annotation, evaluation and
reward-stability analysis over a dataset, driven by one config file.

Outputs are deterministic given a seed and scripted backends: prediction and
trace files carry no wall-clock state.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from . import __version__
from .agent import ChatAgentBackend, TreeScriptBackend
from .annotate import annotate_question, export_training_file
from .assets import load_prompt_assets
from .baselines import run_bfs, run_dfs, run_linear, run_random, run_random_select
from .chat_api import ChatEndpointBackend, ReplayBackend
from .config import ConfigError, ExperimentConfig, load_config
from .figures import render_report_figure, render_stability_figure
from .kb import load_kb
from .metrics import EvalRecord, aggregate, write_report_csv
from .mcts import run_search
from .reward import (
    PromptRewardModel,
    RandomRewardModel,
    score_stability,
    write_stability_csv,
)
from .sparql import canonical_answers, evaluate, parse_query

BASELINE_STRATEGIES = ("linear", "linear-vote", "bfs", "dfs", "random", "random-select")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def question_seed(base_seed: int, question_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}|{question_id}".encode("utf-8")).hexdigest()
    return int(digest[:12], 16)


def load_dataset(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "id" not in rec or "question" not in rec:
                raise ValueError(f"{path}:{lineno}: dataset records need id and question")
            records.append(rec)
    return records


def _gold_answers(record: dict, kb) -> Optional[frozenset]:
    if record.get("answers") is not None:
        return frozenset(str(a) for a in record["answers"])
    if record.get("sparql"):
        try:
            return canonical_answers(evaluate(parse_query(record["sparql"]), kb))
        except Exception:
            return None
    return None


def build_agent_backend(spec: str, config: ExperimentConfig):
    if spec.startswith("scripted:"):
        return TreeScriptBackend.load(spec.split(":", 1)[1], pad_to_n=True)
    assets = load_prompt_assets(config.prompt_dir)
    if spec.startswith("replay:"):
        return ChatAgentBackend(ReplayBackend.load(spec.split(":", 1)[1]), assets,
                                temperature=config.temperature_agent)
    if spec == "endpoint":
        endpoint = config.endpoint("agent")
        if endpoint is None:
            raise ConfigError(["--agent endpoint requires agent_endpoint in the config"])
        return ChatAgentBackend(ChatEndpointBackend(endpoint), assets,
                                temperature=config.temperature_agent)
    raise ConfigError([f"unknown --agent value {spec!r} "
                       "(expected scripted:<file>, replay:<file> or endpoint)"])


def build_reward_model(config: ExperimentConfig, seed: int):
    if config.reward_mode == "random":
        return RandomRewardModel(seed)
    endpoint = config.endpoint("reward")
    if endpoint is None:
        raise ConfigError([f"reward mode {config.reward_mode!r} requires "
                           "reward_endpoint in the config"])
    return PromptRewardModel(ChatEndpointBackend(endpoint), config.reward_config())


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, config: ExperimentConfig,
                    args: argparse.Namespace) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": asdict(config),
        "config_digest": config.digest(),
        "kb": getattr(args, "kb", None),
        "dataset": getattr(args, "dataset", None),
        "agent": getattr(args, "agent", None),
        "strategy": getattr(args, "strategy", None),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")


def agent_factory(spec: str, config: ExperimentConfig):
    """Scripted and replay backends are read-only and shared across workers;
    a live endpoint gets a fresh session per question."""
    if spec == "endpoint":
        return lambda: build_agent_backend(spec, config)
    shared = build_agent_backend(spec, config)
    return lambda: shared


def _run_one(record: dict, kb, config: ExperimentConfig, strategy: str,
             make_agent) -> tuple[dict, list[dict]]:
    qid = str(record["id"])
    seed = question_seed(config.seed, qid)
    agent = make_agent()
    search_config = config.search_config(seed=seed)
    try:
        if strategy in ("linear", "linear-vote"):
            runs = 1 if strategy == "linear" else config.linear_runs
            result = run_linear(record["question"], kb, agent, search_config,
                                runs=runs, question_id=qid)
        elif strategy == "bfs":
            result = run_bfs(record["question"], kb, agent, search_config, question_id=qid)
        elif strategy == "dfs":
            result = run_dfs(record["question"], kb, agent, search_config, question_id=qid)
        elif strategy == "random-select":
            result = run_random_select(record["question"], kb, agent, search_config,
                                       question_id=qid)
        elif strategy == "random":
            result = run_random(record["question"], kb, agent, search_config,
                                question_id=qid)
        else:
            reward_model = build_reward_model(config, seed)
            result = run_search(record["question"], kb, agent, reward_model,
                                search_config, strategy="mcts", question_id=qid)
    except Exception as exc:  # per-question failures never stop the run
        prediction = {"id": qid, "type": record.get("type", "unknown"),
                      "question": record["question"], "strategy": strategy,
                      "answer": [], "chosen_sparql": None,
                      "terminal_predictions": [], "gold_answers": None,
                      "tree_stats": None, "error": f"{type(exc).__name__}: {exc}"}
        return prediction, []

    gold = _gold_answers(record, kb)
    prediction = {
        "id": qid,
        "type": record.get("type", "unknown"),
        "question": record["question"],
        "strategy": strategy,
        "answer": sorted(result.answer),
        "chosen_sparql": result.chosen_sparql,
        "terminal_predictions": [
            {"node_id": p.node_id, "sparql": p.sparql, "answers": sorted(p.answers),
             "mean_reward": round(p.mean_reward, 6)}
            for p in result.terminal_predictions],
        "gold_answers": sorted(gold) if gold is not None else None,
        "tree_stats": asdict(result.tree_stats),
        "error": None,
    }
    return prediction, result.trace


def _eval_records_from_predictions(predictions: list[dict]) -> tuple[list[EvalRecord], int]:
    records = []
    skipped = 0
    for pred in predictions:
        gold = pred.get("gold_answers")
        if not gold:
            skipped += 1
            continue
        records.append(EvalRecord(
            question_id=pred["id"],
            question_type=pred.get("type") or "unknown",
            pred=frozenset(pred.get("answer") or ()),
            gold=frozenset(gold),
            branch_preds=[frozenset(t["answers"])
                          for t in pred.get("terminal_predictions") or ()],
        ))
    return records, skipped


def _write_report(predictions: list[dict], out: Path) -> None:
    records, skipped = _eval_records_from_predictions(predictions)
    if skipped:
        _log(f"report: {skipped} question(s) without gold answers were skipped")
    if not records:
        write_report_csv([], str(out / "report.csv"))
        return
    rows = aggregate(records)
    write_report_csv(rows, str(out / "report.csv"))
    render_report_figure(rows, str(out / "report.png"))


def cmd_search(args: argparse.Namespace, strategy: Optional[str] = None) -> int:
    config = _load_config_safely(args)
    if config is None:
        return 2
    strategy = strategy or "mcts"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kb = load_kb(args.kb)
    dataset = load_dataset(args.dataset)
    _log(f"{strategy}: {len(dataset)} question(s), workers={config.workers}")
    make_agent = agent_factory(args.agent, config)

    def work(record: dict):
        return _run_one(record, kb, config, strategy, make_agent)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, dataset))
    else:
        results = [work(record) for record in dataset]

    predictions = [prediction for prediction, _trace in results]
    traces = [rec for _prediction, trace in results for rec in trace]
    _write_jsonl(out / "predictions.jsonl", predictions)
    _write_jsonl(out / "traces.jsonl", traces)
    _write_report(predictions, out)
    _write_manifest(out, "search" if strategy == "mcts" else f"baseline:{strategy}",
                    config, args)
    failures = sum(1 for p in predictions if p["error"])
    if failures:
        _log(f"{failures} question(s) failed; see predictions.jsonl")
    _log(f"wrote {out}/predictions.jsonl, traces.jsonl, report.csv")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    return cmd_search(args, strategy=args.strategy)


def cmd_annotate(args: argparse.Namespace) -> int:
    config = _load_config_safely(args)
    if config is None:
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kb = load_kb(args.kb)
    dataset = load_dataset(args.dataset)
    assets = load_prompt_assets(config.prompt_dir)
    threshold = args.threshold if args.threshold is not None else config.annotate_f1_threshold
    _log(f"annotate: {len(dataset)} question(s), F1 threshold {threshold}")
    make_agent = agent_factory(args.agent, config)

    def work(record: dict):
        qid = str(record["id"])
        if not record.get("sparql"):
            return qid, None, "no-gold-sparql"
        seed = question_seed(config.seed, qid)
        agent = make_agent()
        reward_model = build_reward_model(config, seed)
        outcome = annotate_question(qid, record["question"], record["sparql"], kb,
                                    agent, reward_model,
                                    config.search_config(seed=seed),
                                    threshold=threshold)
        return qid, outcome.trajectory, outcome.skip_reason

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, dataset))
    else:
        results = [work(record) for record in dataset]

    trajectories = [t for _qid, t, _reason in results if t is not None]
    export_training_file(trajectories, str(out / "training.jsonl"), assets)
    with open(out / "skips.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("id,reason\n")
        for qid, trajectory, reason in results:
            if trajectory is None:
                fh.write(f"{qid},{reason}\n")
    _write_manifest(out, "annotate", config, args)
    _log(f"annotated {len(trajectories)}/{len(dataset)}; "
         f"wrote {out}/training.jsonl, skips.csv")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config_safely(args)
    if config is None:
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predictions = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                predictions.append(json.loads(line))

    if args.dataset and args.kb:
        kb = load_kb(args.kb)
        gold_by_id = {str(r["id"]): _gold_answers(r, kb) for r in load_dataset(args.dataset)}
        for pred in predictions:
            if not pred.get("gold_answers"):
                gold = gold_by_id.get(pred["id"])
                pred["gold_answers"] = sorted(gold) if gold else None

    _write_report(predictions, out)
    _write_manifest(out, "eval", config, args)
    _log(f"wrote {out}/report.csv")
    return 0


def cmd_reward_stats(args: argparse.Namespace) -> int:
    config = _load_config_safely(args)
    if config is None:
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(args.traces, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            samples = rec.get("reward_samples")
            if not samples:
                continue
            values = [s["value"] for s in samples if s.get("value") is not None]
            entries.append((rec["depth"], values))
    rows, excluded = score_stability(entries)
    write_stability_csv(rows, str(out / "stability.csv"))
    render_stability_figure(rows, str(out / "stability.png"))
    _write_manifest(out, "reward-stats", config, args)
    _log(f"stability over {sum(r.node_count for r in rows)} node(s), "
         f"{excluded} excluded; wrote {out}/stability.csv")
    return 0


def _load_config_safely(args: argparse.Namespace) -> Optional[ExperimentConfig]:
    overrides = {
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "reward_mode": getattr(args, "reward_mode", None),
    }
    try:
        return load_config(getattr(args, "config", None), overrides)
    except ConfigError as exc:
        for error in exc.errors:
            _log(f"config error: {error}")
        return None


def _add_common(parser: argparse.ArgumentParser, dataset: bool = True) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, help="parallel questions")
    if dataset:
        parser.add_argument("--kb", required=True, help="KB JSON-lines file")
        parser.add_argument("--dataset", required=True, help="question JSON-lines file")
        parser.add_argument("--agent", default="endpoint",
                            help="scripted:<file>, replay:<file> or endpoint")
        parser.add_argument("--reward-mode", choices=("rule", "direct", "random"),
                            dest="reward_mode", help="reward scoring mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbsearch",
                                     description="Tree-search semantic parsing "
                                                 "over an in-memory knowledge base")
    sub = parser.add_subparsers(dest="command", required=True)

    p_search = sub.add_parser("search", help="tree search over a dataset")
    _add_common(p_search)
    p_search.set_defaults(func=cmd_search)

    p_base = sub.add_parser("baseline", help="run a baseline strategy")
    _add_common(p_base)
    p_base.add_argument("--strategy", required=True, choices=BASELINE_STRATEGIES)
    p_base.set_defaults(func=cmd_baseline)

    p_ann = sub.add_parser("annotate", help="distant-supervision trajectories")
    _add_common(p_ann)
    p_ann.add_argument("--threshold", type=float, help="F1 acceptance threshold")
    p_ann.set_defaults(func=cmd_annotate)

    p_eval = sub.add_parser("eval", help="metrics report from prediction files")
    _add_common(p_eval, dataset=False)
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--kb", help="KB file (to evaluate gold queries)")
    p_eval.add_argument("--dataset", help="dataset with gold answers")
    p_eval.set_defaults(func=cmd_eval)

    p_stats = sub.add_parser("reward-stats", help="score stability by depth")
    _add_common(p_stats, dataset=False)
    p_stats.add_argument("--traces", required=True, help="traces.jsonl from a run")
    p_stats.set_defaults(func=cmd_reward_stats)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
