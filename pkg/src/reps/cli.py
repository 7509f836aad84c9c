"""Command-line entry point wiring corpora, judges, tournaments, datasets,
training, evaluation, and simulations into reproducible runs.

Every run writes a manifest (resolved config, seeds, input hashes, tool
version) next to its artifacts; rerunning with an identical manifest
reproduces the artifacts byte-for-byte. Settings resolve as flags > config
file > defaults. Exit codes: 1 for config/validation errors (with a
structured JSON error report on stderr), 2 for unrecoverable judge
transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, experiments, simkernel, synth
from .datasets import (
    FileValidityOracle,
    SimulatedValidityOracle,
    build_baseline,
    build_controlled_test,
    build_high_quality,
    build_low_quality,
    match_positive_counts,
    mix_datasets,
)
from .domain import (
    Question,
    Solution,
    answers_match,
    load_labeled,
    load_questions,
    load_solutions,
    load_test_items,
    normalize_answer,
    read_jsonl,
    save_labeled,
    save_test_items,
    write_jsonl,
)
from .errors import ConfigError, DomainError, JudgeUnavailable, RepsError, UnparsableAnswer
from .judges import LongerRationaleJudge, SimJudgeParams, SimulatedJudge, truth_from_pool
from .metrics import evaluate_controlled, task_performance, win_rate
from .remote import ChatCompletionClient, JudgeCallCache, RemoteConfig, RemoteJudge, RemoteValidityOracle, load_fewshot
from .runio import build_manifest, dump_json, write_csv, write_manifest
from .tournament import TournamentConfig, build_reps_dataset
from .verifier import (
    FeatureSpec,
    GroundTruthVerifier,
    ReferenceScorer,
    TrainConfig,
    UniformRandomVerifier,
    train_reference_scorer,
)

REGIMES = ("low", "baseline", "high", "reps", "mix", "controlled", "all")
JUDGES = ("remote", "simulated", "stub")
VERIFIERS = ("model", "oracle", "random")


# ---------------------------------------------------------------------------
# Settings resolution: flags > config file > defaults
# ---------------------------------------------------------------------------

def _bool(text):
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_SETTINGS = {
    # name: (parse, default)
    "seed": (int, 0),
    "jobs": (int, 1),
    "out": (str, "reps-out"),
    "corpus": (str, None),
    "pool": (str, None),
    "regime": (str, None),
    "n": (int, 8),
    "s": (int, 5),
    "judge": (str, "simulated"),
    "match_size": (_bool, False),
    "oracle": (str, "simulated"),
    "oracle_cap": (int, 20),
    "p_accuracy": (float, 0.9),
    "length_bias": (float, 0.0),
    "abstain_rate": (float, 0.0),
    "dataset": (str, None),
    "dataset_baseline": (str, None),
    "dataset_high": (str, None),
    "mix_ratio": (float, 0.5),
    "testset": (str, None),
    "model": (str, None),
    "verifier": (str, "model"),
    "trials": (int, 20000),
    "k": (int, 5),
    "lr": (float, 2.0),
    "epochs": (int, 120),
    "l2": (float, 1e-6),
    "hash_bits": (int, 18),
    "endpoint": (str, None),
    "remote_model": (str, None),
    "temperature": (float, 0.7),
    "max_tokens": (int, 512),
    "backoff": (float, 0.5),
    "auth_env": (str, "JUDGE_API_TOKEN"),
    "cache": (str, None),
    "fewshot": (str, None),
    "backend": (str, "auto"),
    "questions": (int, 200),
    "valid_correct": (int, 2),
    "invalid_correct": (int, 4),
    "incorrect": (int, 4),
    "marker_rate_valid": (float, 0.9),
    "marker_rate_invalid": (float, 0.2),
    "selections_a": (str, None),
    "selections_b": (str, None),
    "sim_ns": (str, None),   # comma lists overriding the sweep grids
    "sim_ss": (str, None),
    "sim_ps": (str, None),
    "valid_length": (float, 120.0),
    "invalid_length": (float, 600.0),
    "length_sd": (float, 30.0),
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat "key = value" format; '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _SETTINGS:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = value
    return values


def resolve_settings(args: argparse.Namespace) -> dict:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for name, (parse, default) in _SETTINGS.items():
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in file_values:
            try:
                resolved[name] = parse(file_values[name])
            except ValueError as exc:
                raise ConfigError(f"config key {name}: {exc}") from exc
        else:
            resolved[name] = default
    _validate(resolved)
    return resolved


def _validate(cfg: dict) -> None:
    if cfg["n"] < 1:
        raise ConfigError(f"--n must be >= 1, got {cfg['n']}")
    if cfg["s"] < 1 or cfg["s"] % 2 == 0:
        raise ConfigError(f"--s must be odd and >= 1, got {cfg['s']}")
    if cfg["jobs"] < 1:
        raise ConfigError(f"--jobs must be >= 1, got {cfg['jobs']}")
    for key in ("p_accuracy", "abstain_rate", "marker_rate_valid", "marker_rate_invalid"):
        if not 0.0 <= cfg[key] <= 1.0:
            raise ConfigError(f"{key} must be in [0,1], got {cfg[key]}")
    if cfg["abstain_rate"] >= 1.0:
        raise ConfigError("abstain_rate must be < 1")
    if cfg["length_bias"] < 0:
        raise ConfigError("length_bias must be >= 0")
    if cfg["judge"] not in JUDGES:
        raise ConfigError(f"judge must be one of {JUDGES}, got {cfg['judge']!r}")
    if cfg["verifier"] not in VERIFIERS:
        raise ConfigError(f"verifier must be one of {VERIFIERS}, got {cfg['verifier']!r}")
    if cfg["backend"] not in ("auto", "compiled", "pure"):
        raise ConfigError(f"backend must be auto/compiled/pure, got {cfg['backend']!r}")
    if not 0.0 <= cfg["mix_ratio"] <= 1.0:
        raise ConfigError(f"mix_ratio must be in [0,1], got {cfg['mix_ratio']}")
    if cfg["trials"] < 1:
        raise ConfigError("trials must be >= 1")


def _require(cfg: dict, *names: str) -> None:
    for name in names:
        if not cfg.get(name):
            raise ConfigError(f"missing required setting --{name.replace('_', '-')}")
    for name in names:
        if name in ("corpus", "pool", "dataset", "dataset_baseline", "dataset_high",
                    "testset", "selections_a", "selections_b") and not Path(cfg[name]).exists():
            raise ConfigError(f"{name} path does not exist: {cfg[name]}")


# ---------------------------------------------------------------------------
# Shared construction helpers
# ---------------------------------------------------------------------------


def _remote_client(cfg: dict) -> ChatCompletionClient:
    _require(cfg, "endpoint", "remote_model")
    return ChatCompletionClient(
        RemoteConfig(
            endpoint=cfg["endpoint"],
            model=cfg["remote_model"],
            temperature=cfg["temperature"],
            max_tokens=cfg["max_tokens"],
            backoff_base=cfg["backoff"],
            auth_env=cfg["auth_env"],
            max_in_flight=cfg["jobs"],
            cache_path=cfg["cache"] or str(Path(cfg["out"]) / "judge_cache.jsonl"),
        )
    )


def _build_judge(cfg: dict, pool: list[Solution]):
    if cfg["judge"] == "simulated":
        params = SimJudgeParams(
            p_accuracy=cfg["p_accuracy"],
            length_bias=cfg["length_bias"],
            abstain_rate=cfg["abstain_rate"],
            seed=cfg["seed"],
        )
        return SimulatedJudge(params, truth_from_pool(pool))
    if cfg["judge"] == "stub":
        return LongerRationaleJudge()
    fewshot = load_fewshot(cfg["fewshot"]) if cfg["fewshot"] else ()
    return RemoteJudge(_remote_client(cfg), fewshot=fewshot)


def _build_oracle(cfg: dict):
    oracle = cfg["oracle"]
    if oracle == "simulated":
        return SimulatedValidityOracle(seed=cfg["seed"], eval_cap=cfg["oracle_cap"])
    if oracle == "remote":
        return RemoteValidityOracle(_remote_client(cfg), eval_cap=cfg["oracle_cap"])
    if not Path(oracle).exists():
        raise ConfigError(f"oracle file does not exist: {oracle}")
    return FileValidityOracle.from_path(oracle, eval_cap=cfg["oracle_cap"])


def _build_verifier(cfg: dict):
    if cfg["verifier"] == "model":
        _require(cfg, "model")
        if not Path(cfg["model"]).exists():
            raise ConfigError(f"model path does not exist: {cfg['model']}")
        return ReferenceScorer.load(cfg["model"])
    if cfg["verifier"] == "oracle":
        return GroundTruthVerifier(seed=cfg["seed"])
    return UniformRandomVerifier(seed=cfg["seed"])


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _kernel_backend(cfg: dict) -> str | None:
    return None if cfg["backend"] == "auto" else cfg["backend"]


def _load_corpus_pool(cfg: dict) -> tuple[list[Question], list[Solution]]:
    _require(cfg, "corpus", "pool")
    corpus = load_questions(cfg["corpus"])
    pool = load_solutions(cfg["pool"])
    known = {q.id for q in corpus}
    for sol in pool:
        if sol.question_id not in known:
            raise DomainError(f"solution {sol.id} references unknown question {sol.question_id}")
    return corpus, pool


def _manifest(cfg: dict, subcommand: str, inputs: dict, counters: dict | None = None) -> dict:
    # `out` is where the manifest itself lives; leaving it out keeps manifests
    # of equivalent runs byte-identical regardless of the output directory
    config = {k: v for k, v in cfg.items() if v is not None and k != "out"}
    return build_manifest(
        subcommand,
        config=config,
        inputs=inputs,
        seeds={"seed": cfg["seed"]},
        counters=counters,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    out = _out_dir(cfg)
    synth_cfg = synth.SynthConfig(
        n_questions=cfg["questions"],
        valid_correct_per_question=cfg["valid_correct"],
        invalid_correct_per_question=cfg["invalid_correct"],
        incorrect_per_question=cfg["incorrect"],
        marker_rate_valid=cfg["marker_rate_valid"],
        marker_rate_invalid=cfg["marker_rate_invalid"],
        seed=cfg["seed"],
        id_prefix=args.prefix,
    )
    bundle = synth.generate_benchmark(synth_cfg)
    corpus_path = out / "corpus.jsonl"
    pool_path = out / "pool.jsonl"
    write_jsonl(corpus_path, (q.to_dict() for q in bundle.questions))
    write_jsonl(pool_path, (s.to_dict() for s in bundle.pool))
    manifest = _manifest(
        cfg, "synth", {},
        counters={"questions": len(bundle.questions), "solutions": len(bundle.pool)},
    )
    write_manifest(out, manifest)
    print(f"wrote {corpus_path} ({len(bundle.questions)} questions), "
          f"{pool_path} ({len(bundle.pool)} solutions)")
    return 0


def cmd_ingest(args, cfg) -> int:
    corpus, pool = _load_corpus_pool(cfg)
    out = _out_dir(cfg)
    by_id = {q.id: q for q in corpus}
    unparsable = 0
    correct = 0
    for sol in pool:
        question = by_id[sol.question_id]
        try:
            normalize_answer(sol.answer, question.task_kind)
        except UnparsableAnswer:
            unparsable += 1
            continue
        correct += answers_match(sol.answer, question.gold_answer, question.task_kind)
    report = {
        "questions": len(corpus),
        "solutions": len(pool),
        "unparsable_answers": unparsable,
        "answer_accuracy_rate": correct / len(pool) if pool else None,
        "task_kinds": sorted({q.task_kind.value for q in corpus}),
    }
    dump_json(report, out / "ingest_report.json")
    write_manifest(out, _manifest(
        cfg, "ingest", {"corpus": cfg["corpus"], "pool": cfg["pool"]}, counters=report,
    ))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _write_reps_outputs(cfg, out, corpus, pool, result) -> None:
    save_labeled(out / "dataset.jsonl", result.examples)
    trace_dir = out / "trace"
    trace_dir.mkdir(exist_ok=True)
    for trace in result.traces:
        dump_json(trace.to_dict(), trace_dir / f"{trace.question_id}.json")
    dump_json(result.counters, out / "stats.json")
    if result.counters["judge_failed_questions"] and not result.counters["positives"]:
        raise JudgeUnavailable(
            "judge transport failed for every judged question "
            f"({result.counters['judge_failed_questions']} failures); "
            f"partial outputs written to {out}"
        )


def cmd_reps_select(args, cfg) -> int:
    corpus, pool = _load_corpus_pool(cfg)
    out = _out_dir(cfg)
    judge = _build_judge(cfg, pool)
    config = TournamentConfig(
        n_candidates=cfg["n"], votes_per_match=cfg["s"], seed=cfg["seed"]
    )
    result = build_reps_dataset(corpus, pool, judge, config, jobs=cfg["jobs"])
    _write_reps_outputs(cfg, out, corpus, pool, result)
    counters = dict(result.counters)
    counters["judge"] = getattr(judge, "name", cfg["judge"])
    write_manifest(out, _manifest(
        cfg, "reps-select", {"corpus": cfg["corpus"], "pool": cfg["pool"]}, counters=counters,
    ))
    print(f"reps-select: {counters['positives']} positives, "
          f"{counters['negatives']} negatives, {len(result.traces)} traces -> {out}")
    return 0


def cmd_build_dataset(args, cfg) -> int:
    regime = cfg["regime"] or args.regime
    if regime not in REGIMES:
        raise ConfigError(f"--regime must be one of {REGIMES}, got {regime!r}")
    out = _out_dir(cfg)
    inputs: dict[str, str] = {}
    counters: dict = {}

    if regime == "mix":
        _require(cfg, "dataset_baseline", "dataset_high")
        baseline = load_labeled(cfg["dataset_baseline"])
        high = load_labeled(cfg["dataset_high"])
        mixed = mix_datasets(baseline, high, cfg["mix_ratio"], seed=cfg["seed"])
        save_labeled(out / "dataset.jsonl", mixed)
        counters = {
            "ratio": cfg["mix_ratio"],
            "positives": sum(1 for ex in mixed if ex.label == 1),
            "negatives": sum(1 for ex in mixed if ex.label == 0),
        }
        inputs = {"dataset_baseline": cfg["dataset_baseline"], "dataset_high": cfg["dataset_high"]}
    else:
        corpus, pool = _load_corpus_pool(cfg)
        inputs = {"corpus": cfg["corpus"], "pool": cfg["pool"]}
        if regime == "controlled":
            result = build_controlled_test(corpus, pool, _build_oracle(cfg), seed=cfg["seed"])
            save_test_items(out / "testset.jsonl", result.items)
            counters = result.stats
        elif regime == "low":
            result = build_low_quality(pool, corpus, seed=cfg["seed"])
            save_labeled(out / "dataset.jsonl", result.examples)
            counters = result.stats
        elif regime == "baseline":
            result = build_baseline(pool, corpus)
            save_labeled(out / "dataset.jsonl", result.examples)
            counters = result.stats
        elif regime == "high":
            result = build_high_quality(pool, corpus, _build_oracle(cfg))
            save_labeled(out / "dataset.jsonl", result.examples)
            counters = result.stats
        elif regime == "reps":
            judge = _build_judge(cfg, pool)
            config = TournamentConfig(
                n_candidates=cfg["n"], votes_per_match=cfg["s"], seed=cfg["seed"]
            )
            reps_result = build_reps_dataset(corpus, pool, judge, config, jobs=cfg["jobs"])
            _write_reps_outputs(cfg, out, corpus, pool, reps_result)
            counters = reps_result.counters
        else:  # all four labeling regimes, optionally size-matched
            judge = _build_judge(cfg, pool)
            config = TournamentConfig(
                n_candidates=cfg["n"], votes_per_match=cfg["s"], seed=cfg["seed"]
            )
            datasets = {
                "low": build_low_quality(pool, corpus, seed=cfg["seed"]).examples,
                "baseline": build_baseline(pool, corpus).examples,
                "high": build_high_quality(pool, corpus, _build_oracle(cfg)).examples,
                "reps": build_reps_dataset(corpus, pool, judge, config, jobs=cfg["jobs"]).examples,
            }
            if cfg["match_size"]:
                datasets = match_positive_counts(datasets, seed=cfg["seed"])
            for name, examples in datasets.items():
                save_labeled(out / f"dataset_{name}.jsonl", examples)
                counters[f"{name}_positives"] = sum(1 for ex in examples if ex.label == 1)
                counters[f"{name}_negatives"] = sum(1 for ex in examples if ex.label == 0)
    dump_json(counters, out / "stats.json")
    write_manifest(out, _manifest(cfg, f"build-dataset:{regime}", inputs, counters=counters))
    print(f"build-dataset --regime {regime}: {json.dumps(counters, sort_keys=True)}")
    return 0


def cmd_train(args, cfg) -> int:
    _require(cfg, "dataset", "corpus")
    corpus = load_questions(cfg["corpus"])
    examples = load_labeled(cfg["dataset"])
    out = _out_dir(cfg)
    train_config = TrainConfig(
        lr=cfg["lr"],
        epochs=cfg["epochs"],
        l2=cfg["l2"],
        seed=cfg["seed"],
        feature_spec=FeatureSpec(hash_bits=cfg["hash_bits"]),
    )
    result = train_reference_scorer(examples, corpus, train_config)
    model_path = out / "model.json"
    result.scorer.save(model_path)
    stats = {
        "examples": len(examples),
        "positives": sum(1 for ex in examples if ex.label == 1),
        "initial_loss": result.losses[0],
        "final_loss": result.losses[-1],
        "epochs": cfg["epochs"],
    }
    dump_json(stats, out / "stats.json")
    write_manifest(out, _manifest(
        cfg, "train", {"dataset": cfg["dataset"], "corpus": cfg["corpus"]}, counters=stats,
    ))
    print(f"train: loss {stats['initial_loss']:.6f} -> {stats['final_loss']:.6f}, "
          f"model -> {model_path}")
    return 0


def cmd_eval(args, cfg) -> int:
    out = _out_dir(cfg)
    verifier = _build_verifier(cfg)
    if args.controlled:
        _require(cfg, "testset")
        items = load_test_items(cfg["testset"])
        report = evaluate_controlled(verifier, items, seeds={"seed": cfg["seed"]})
        dump_json(report.to_dict(), out / "report.json")
        write_csv(
            out / "selections.csv",
            ["question_id", "solution_id", "role"],
            report.selection_rows(),
        )
        inputs = {"testset": cfg["testset"]}
        summary = {
            "n_items": report.n_items,
            "rationale_accuracy": report.rationale_accuracy,
            "answer_accuracy": report.answer_accuracy,
        }
    elif args.task:
        corpus, pool = _load_corpus_pool(cfg)
        report = task_performance(verifier, corpus, pool, k=cfg["k"], seed=cfg["seed"])
        dump_json(report.to_dict(), out / "report.json")
        inputs = {"corpus": cfg["corpus"], "pool": cfg["pool"]}
        summary = {
            "task_performance": report.value,
            "n_questions": report.n_questions,
            "n_excluded": report.n_excluded,
        }
    else:
        raise ConfigError("eval requires --controlled or --task")
    if cfg["verifier"] == "model":
        inputs["model"] = cfg["model"]
    write_manifest(out, _manifest(cfg, "eval", inputs, counters=summary))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_score(args, cfg) -> int:
    _require(cfg, "model")
    corpus, pool = _load_corpus_pool(cfg)
    if not Path(cfg["model"]).exists():
        raise ConfigError(f"model path does not exist: {cfg['model']}")
    scorer = ReferenceScorer.load(cfg["model"])
    out = _out_dir(cfg)
    by_id = {q.id: q for q in corpus}
    rows = [
        {"solution_id": sol.id, "p": scorer.score_value(by_id[sol.question_id], sol)}
        for sol in pool
    ]
    write_jsonl(out / "scores.jsonl", rows)
    write_manifest(out, _manifest(
        cfg, "score",
        {"corpus": cfg["corpus"], "pool": cfg["pool"], "model": cfg["model"]},
        counters={"scored": len(rows)},
    ))
    print(f"score: wrote {len(rows)} rows -> {out / 'scores.jsonl'}")
    return 0


def _parse_grid(text: str | None, parse, default):
    if text is None:
        return default
    try:
        return tuple(parse(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad grid value {text!r}: {exc}") from exc


def cmd_simulate(args, cfg) -> int:
    out = _out_dir(cfg)
    backend = _kernel_backend(cfg)
    mode = args.sweep or "survival"
    if mode == "survival":
        cells = experiments.survival_grid(
            ns=_parse_grid(cfg["sim_ns"], int, experiments.DEFAULT_SURVIVAL_GRID["n"]),
            ss=_parse_grid(cfg["sim_ss"], int, experiments.DEFAULT_SURVIVAL_GRID["s"]),
            ps=_parse_grid(cfg["sim_ps"], float, experiments.DEFAULT_SURVIVAL_GRID["p"]),
            trials=cfg["trials"],
            seed=cfg["seed"],
            backend=backend,
        )
        csv_path = out / "survival_sweep.csv"
    elif mode == "bias":
        cells = experiments.bias_amplification_sweep(
            ns=_parse_grid(cfg["sim_ns"], int, experiments.DEFAULT_BIAS_GRID["n"]),
            ss=_parse_grid(cfg["sim_ss"], int, experiments.DEFAULT_BIAS_GRID["s"]),
            p_accuracy=cfg["p_accuracy"],
            length_bias=cfg["length_bias"],
            trials=cfg["trials"],
            seed=cfg["seed"],
            valid_length=cfg["valid_length"],
            invalid_length=cfg["invalid_length"],
            length_sd=cfg["length_sd"],
            backend=backend,
        )
        csv_path = out / "bias_sweep.csv"
    else:
        raise ConfigError(f"--sweep must be survival or bias, got {mode!r}")
    rows = [cell.to_row() for cell in cells]
    fields = ["n", "s", "p", "beta", "trials", "valid_win_rate", "valid_win_se",
              "mean_winner_length", "winner_length_se", "analytic", "abs_err"]
    write_csv(csv_path, fields, rows)
    summary = {
        "mode": mode,
        "cells": len(rows),
        "backend": backend or simkernel.backend_name(),
        "max_abs_err": max(
            (r["abs_err"] for r in rows if r["abs_err"] is not None), default=None
        ),
    }
    dump_json(summary, out / "summary.json")
    write_manifest(out, _manifest(cfg, f"simulate:{mode}", {}, counters=summary))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _load_selections(path: str, pool_by_id: dict[str, Solution]) -> dict[str, Solution]:
    picks: dict[str, Solution] = {}
    for row in read_jsonl(path):
        sid = row["solution_id"]
        if sid not in pool_by_id:
            raise DomainError(f"{path}: unknown solution id {sid!r}")
        picks[row["question_id"]] = pool_by_id[sid]
    return picks


def cmd_winrate(args, cfg) -> int:
    _require(cfg, "selections_a", "selections_b")
    corpus, pool = _load_corpus_pool(cfg)
    out = _out_dir(cfg)
    pool_by_id = {sol.id: sol for sol in pool}
    picks_a = _load_selections(cfg["selections_a"], pool_by_id)
    picks_b = _load_selections(cfg["selections_b"], pool_by_id)
    judge = _build_judge(cfg, pool)
    comparisons = [
        (question, picks_a[question.id], picks_b[question.id])
        for question in corpus
        if question.id in picks_a and question.id in picks_b
    ]
    report = win_rate(judge, comparisons, seed=cfg["seed"])
    dump_json(report.to_dict(), out / "winrate.json")
    write_manifest(out, _manifest(
        cfg, "winrate",
        {
            "corpus": cfg["corpus"], "pool": cfg["pool"],
            "selections_a": cfg["selections_a"], "selections_b": cfg["selections_b"],
        },
        counters=report.to_dict(),
    ))
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_cache(args, cfg) -> int:
    if not cfg["cache"]:
        raise ConfigError("cache subcommand requires --cache PATH")
    cache = JudgeCallCache(cfg["cache"])
    if args.action == "stats":
        print(json.dumps(cache.stats(), indent=2, sort_keys=True))
    else:
        removed = cache.purge()
        print(f"purged {removed} cached responses from {cfg['cache']}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reps",
        description="Curate rationale training data by tournament-style pairwise "
                    "selection; build labeling regimes, train and evaluate verifiers, "
                    "and run desk-scale bias simulations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="bound on concurrent judge calls")
        p.add_argument("--out", help="output directory (default reps-out)")

    def corpus_pool(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", help="questions JSONL")
        p.add_argument("--pool", help="solutions JSONL")

    def judge_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--judge", choices=JUDGES)
        p.add_argument("--p-accuracy", dest="p_accuracy", type=float)
        p.add_argument("--length-bias", dest="length_bias", type=float)
        p.add_argument("--abstain-rate", dest="abstain_rate", type=float)
        p.add_argument("--endpoint")
        p.add_argument("--remote-model", dest="remote_model")
        p.add_argument("--temperature", type=float)
        p.add_argument("--backoff", type=float)
        p.add_argument("--cache")
        p.add_argument("--fewshot")

    p = sub.add_parser("synth", help="generate a synthetic benchmark corpus and pool")
    common(p)
    p.add_argument("--questions", type=int)
    p.add_argument("--valid-correct", dest="valid_correct", type=int)
    p.add_argument("--invalid-correct", dest="invalid_correct", type=int)
    p.add_argument("--incorrect", type=int)
    p.add_argument("--marker-rate-valid", dest="marker_rate_valid", type=float)
    p.add_argument("--marker-rate-invalid", dest="marker_rate_invalid", type=float)
    p.add_argument("--prefix", default="syn")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate corpora and pools")
    common(p)
    corpus_pool(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("reps-select", help="tournament over a pool -> positives + traces")
    common(p)
    corpus_pool(p)
    judge_flags(p)
    p.add_argument("--n", type=int, help="candidate pool size per question")
    p.add_argument("--s", type=int, help="votes per match (odd)")
    p.set_defaults(func=cmd_reps_select)

    p = sub.add_parser("build-dataset", help="build a labeling regime or the controlled test set")
    common(p)
    corpus_pool(p)
    judge_flags(p)
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--oracle", help="simulated | remote | path to validity JSONL")
    p.add_argument("--oracle-cap", dest="oracle_cap", type=int)
    p.add_argument("--match-size", dest="match_size", action="store_const", const=True)
    p.add_argument("--dataset-baseline", dest="dataset_baseline")
    p.add_argument("--dataset-high", dest="dataset_high")
    p.add_argument("--mix-ratio", dest="mix_ratio", type=float)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the reference verifier on a labeled dataset")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--dataset", help="labeled examples JSONL")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--hash-bits", dest="hash_bits", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a verifier (controlled test set or task performance)")
    common(p)
    corpus_pool(p)
    p.add_argument("--controlled", action="store_true")
    p.add_argument("--task", action="store_true")
    p.add_argument("--testset", help="controlled test items JSONL")
    p.add_argument("--verifier", choices=VERIFIERS)
    p.add_argument("--model", help="trained model file (verifier=model)")
    p.add_argument("--k", type=int, help="solutions sampled per question for --task")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score a solutions pool with a trained model")
    common(p)
    corpus_pool(p)
    p.add_argument("--model")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="Monte Carlo sweeps against the analytic oracle")
    common(p)
    p.add_argument("--sweep", nargs="?", const="survival", choices=("survival", "bias"))
    p.add_argument("--trials", type=int)
    p.add_argument("--backend", choices=("auto", "compiled", "pure"))
    p.add_argument("--p-accuracy", dest="p_accuracy", type=float)
    p.add_argument("--length-bias", dest="length_bias", type=float)
    p.add_argument("--sim-ns", dest="sim_ns")
    p.add_argument("--sim-ss", dest="sim_ss")
    p.add_argument("--sim-ps", dest="sim_ps")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("winrate", help="head-to-head judging of two methods' selections")
    common(p)
    corpus_pool(p)
    judge_flags(p)
    p.add_argument("--selections-a", dest="selections_a")
    p.add_argument("--selections-b", dest="selections_b")
    p.set_defaults(func=cmd_winrate)

    p = sub.add_parser("cache", help="judge-call cache maintenance")
    common(p)
    p.add_argument("action", choices=("stats", "purge"))
    p.add_argument("--cache")
    p.set_defaults(func=cmd_cache)

    return parser


def _error_report(exc: Exception) -> None:
    report = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(report, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_settings(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        _error_report(exc)
        return 1
    except JudgeUnavailable as exc:
        _error_report(exc)
        return 2
    except RepsError as exc:
        _error_report(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
