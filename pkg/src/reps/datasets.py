"""The three labeling regimes, the controlled test set, and validity oracles.

Regimes assign binary labels to pooled solutions:

* low_quality  - answer-swapped incorrect solutions as positives
* baseline     - every correct-answer solution is a positive
* high_quality - first correct-answer solution the validity oracle passes

All regimes share the same negative set: every incorrect-answer solution.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

from .domain import (
    CandidateRole,
    ControlledTestItem,
    JudgeSource,
    LabeledExample,
    Question,
    Solution,
    SolutionSource,
    Strategy,
    TaskKind,
    Validity,
    ValidityLabel,
    answers_match,
    normalize_answer,
    read_jsonl,
    solutions_by_question,
)
from .errors import DomainError, UnparsableAnswer
from .seeding import derive_rng, stable_hash64

logger = logging.getLogger(__name__)

DEFAULT_EVAL_CAP = 20


@runtime_checkable
class ValidityOracle(Protocol):
    kind: str
    eval_cap: int

    def judge(self, question: Question, solution: Solution) -> ValidityLabel: ...


@dataclass
class FileValidityOracle:
    """Validity lookups from a precomputed JSONL file of
    {"solution_id": ..., "valid": true/false} rows. Unlisted ids are unknown."""

    labels: Mapping[str, bool]
    eval_cap: int = DEFAULT_EVAL_CAP
    kind: str = "file"

    @classmethod
    def from_path(cls, path: str | Path, eval_cap: int = DEFAULT_EVAL_CAP) -> "FileValidityOracle":
        labels = {}
        for row in read_jsonl(path):
            labels[row["solution_id"]] = bool(row["valid"])
        return cls(labels=labels, eval_cap=eval_cap)

    def judge(self, question: Question, solution: Solution) -> ValidityLabel:
        if solution.id not in self.labels:
            return ValidityLabel(Validity.UNKNOWN, JudgeSource.ORACLE_FILE)
        value = Validity.VALID if self.labels[solution.id] else Validity.INVALID
        return ValidityLabel(value, JudgeSource.ORACLE_FILE)


@dataclass
class SimulatedValidityOracle:
    """Ground-truth oracle for synthetic pools, with optional seeded noise.

    Truth comes from an explicit map or from the solution's ``gt_valid``
    extra; solutions with neither are unknown.
    """

    truth: Mapping[str, bool] | None = None
    flip_rate: float = 0.0
    seed: int = 0
    eval_cap: int = DEFAULT_EVAL_CAP
    kind: str = "simulated"

    def judge(self, question: Question, solution: Solution) -> ValidityLabel:
        if self.truth is not None and solution.id in self.truth:
            valid = bool(self.truth[solution.id])
        elif "gt_valid" in solution.extras:
            valid = bool(solution.extras["gt_valid"])
        else:
            return ValidityLabel(Validity.UNKNOWN, JudgeSource.SIMULATED)
        if self.flip_rate > 0.0:
            rng = derive_rng(self.seed, "validity-flip", solution.id)
            if rng.random() < self.flip_rate:
                valid = not valid
        return ValidityLabel(Validity.VALID if valid else Validity.INVALID, JudgeSource.SIMULATED)


# ---------------------------------------------------------------------------
# Answer-span rewriting (low-quality regime)
# ---------------------------------------------------------------------------

_SWAP_PATTERNS = {
    TaskKind.YES_NO: re.compile(r"(answer\s+is[\s:,]*[\"'(]*\s*)(yes|no)\b", re.IGNORECASE),
    TaskKind.MULTIPLE_CHOICE: re.compile(
        r"(answer\s+is[\s:,]*[\"'(]*\s*)([A-Za-z])\b", re.IGNORECASE
    ),
    TaskKind.EXTRACTIVE: re.compile(
        r"(answer\s+is[\s:,]*)([^.\n]*)", re.IGNORECASE
    ),
}


def _gold_surface(question: Question) -> str:
    if question.task_kind is TaskKind.YES_NO:
        from .domain import normalize_answer

        return normalize_answer(question.gold_answer, TaskKind.YES_NO)
    return question.gold_answer


def swap_final_answer(solution: Solution, question: Question) -> tuple[Solution, bool]:
    """Rewrite the rationale's final-answer span to the gold answer.

    Returns (swapped solution, appended_flag). When no answer span exists a
    canonical answer sentence is appended instead of rewritten in place.
    """
    gold = _gold_surface(question)
    pattern = _SWAP_PATTERNS[question.task_kind]
    last = None
    for last in pattern.finditer(solution.rationale):
        pass
    appended = False
    if last is None:
        rationale = solution.rationale.rstrip()
        sep = " " if rationale else ""
        rationale = f"{rationale}{sep}Therefore, the answer is {gold}."
        appended = True
        logger.info("no answer span in %s; appended canonical sentence", solution.id)
    else:
        start, end = last.span(2)
        rationale = solution.rationale[:start] + gold + solution.rationale[end:]
    return (
        Solution(
            id=f"{solution.id}-swapped",
            question_id=solution.question_id,
            rationale=rationale,
            answer=question.gold_answer,
            source=SolutionSource.ANSWER_SWAPPED,
            gen_temperature=solution.gen_temperature,
            extras={**solution.extras, "swapped_from": solution.id},
        ),
        appended,
    )


# ---------------------------------------------------------------------------
# Regime builders
# ---------------------------------------------------------------------------


@dataclass
class RegimeResult:
    examples: list[LabeledExample]
    stats: dict = field(default_factory=dict)

    @property
    def positives(self) -> list[LabeledExample]:
        return [ex for ex in self.examples if ex.label == 1]

    @property
    def negatives(self) -> list[LabeledExample]:
        return [ex for ex in self.examples if ex.label == 0]


def _split_by_correctness(
    solutions: Sequence[Solution],
    question: Question,
    stats: dict | None = None,
) -> tuple[list[Solution], list[Solution]]:
    correct, incorrect = [], []
    for sol in solutions:
        try:
            normalized = normalize_answer(sol.answer, question.task_kind)
        except UnparsableAnswer:
            if stats is not None:
                stats["unparsable_answers"] = stats.get("unparsable_answers", 0) + 1
            incorrect.append(sol)
            continue
        if answers_match(normalized, question.gold_answer, question.task_kind):
            correct.append(sol)
        else:
            incorrect.append(sol)
    return correct, incorrect


def build_low_quality(
    pool: Sequence[Solution], corpus: Sequence[Question], seed: int = 0
) -> RegimeResult:
    """One seeded incorrect solution per question gets its answer swapped to
    gold and becomes the positive; the unmodified incorrect ones are negatives."""
    grouped = solutions_by_question(pool)
    examples: list[LabeledExample] = []
    stats = {"positives": 0, "negatives": 0, "appended_answer_sentences": 0,
             "questions_without_incorrect": 0}
    for question in corpus:
        _, incorrect = _split_by_correctness(grouped.get(question.id, []), question, stats)
        if incorrect:
            chosen = derive_rng(seed, "low-quality", question.id).choice(incorrect)
            swapped, appended = swap_final_answer(chosen, question)
            examples.append(LabeledExample(swapped, 1, Strategy.LOW_QUALITY))
            stats["positives"] += 1
            if appended:
                stats["appended_answer_sentences"] += 1
        else:
            stats["questions_without_incorrect"] += 1
        for sol in incorrect:
            examples.append(LabeledExample(sol, 0, Strategy.LOW_QUALITY))
            stats["negatives"] += 1
    return RegimeResult(examples, stats)


def build_baseline(pool: Sequence[Solution], corpus: Sequence[Question]) -> RegimeResult:
    """Label 1 iff the final answer matches gold, regardless of the rationale."""
    grouped = solutions_by_question(pool)
    examples: list[LabeledExample] = []
    stats = {"positives": 0, "negatives": 0}
    for question in corpus:
        correct, incorrect = _split_by_correctness(grouped.get(question.id, []), question, stats)
        for sol in correct:
            examples.append(LabeledExample(sol, 1, Strategy.BASELINE))
            stats["positives"] += 1
        for sol in incorrect:
            examples.append(LabeledExample(sol, 0, Strategy.BASELINE))
            stats["negatives"] += 1
    return RegimeResult(examples, stats)


def build_high_quality(
    pool: Sequence[Solution], corpus: Sequence[Question], oracle: ValidityOracle
) -> RegimeResult:
    """First oracle-valid correct solution (pool order, up to eval_cap) is the
    positive; questions with none are discarded for positives only."""
    grouped = solutions_by_question(pool)
    examples: list[LabeledExample] = []
    stats = {
        "positives": 0,
        "negatives": 0,
        "discarded_questions": 0,
        "oracle_calls": 0,
        "oracle_valid": 0,
        "oracle_failures": 0,
    }
    for question in corpus:
        correct, incorrect = _split_by_correctness(grouped.get(question.id, []), question, stats)
        positive = None
        for sol in correct[: oracle.eval_cap]:
            stats["oracle_calls"] += 1
            try:
                label = oracle.judge(question, sol)
            except Exception as exc:  # oracle failure counts as not-passing
                logger.warning("oracle failed on %s: %s", sol.id, exc)
                stats["oracle_failures"] += 1
                continue
            if label.value is Validity.VALID:
                stats["oracle_valid"] += 1
                positive = sol
                break
        if positive is not None:
            examples.append(LabeledExample(positive, 1, Strategy.HIGH_QUALITY))
            stats["positives"] += 1
        else:
            stats["discarded_questions"] += 1
        for sol in incorrect:
            examples.append(LabeledExample(sol, 0, Strategy.HIGH_QUALITY))
            stats["negatives"] += 1
    if stats["oracle_calls"]:
        stats["validity_rate"] = stats["oracle_valid"] / stats["oracle_calls"]
    return RegimeResult(examples, stats)


# ---------------------------------------------------------------------------
# Distribution-controlled test set
# ---------------------------------------------------------------------------


@dataclass
class ControlledTestResult:
    items: list[ControlledTestItem]
    stats: dict = field(default_factory=dict)


def build_controlled_test(
    corpus: Sequence[Question],
    pool: Sequence[Solution],
    oracle: ValidityOracle,
    seed: int = 0,
) -> ControlledTestResult:
    """Per question: 1 oracle-valid correct, 2 oracle-invalid correct, and
    2 incorrect candidates, seeded-sampled and shuffled with a recorded seed.

    Questions that cannot fill a role's quota are dropped with a reason
    counter.
    """
    grouped = solutions_by_question(pool)
    items: list[ControlledTestItem] = []
    stats = {
        "items": 0,
        "dropped_insufficient_valid": 0,
        "dropped_insufficient_correct_invalid": 0,
        "dropped_insufficient_incorrect": 0,
        "oracle_calls": 0,
    }
    for question in corpus:
        correct, incorrect = _split_by_correctness(grouped.get(question.id, []), question, stats)
        valid_pool: list[Solution] = []
        invalid_pool: list[Solution] = []
        for sol in correct[: oracle.eval_cap]:
            stats["oracle_calls"] += 1
            try:
                label = oracle.judge(question, sol)
            except Exception as exc:
                logger.warning("oracle failed on %s: %s", sol.id, exc)
                continue
            if label.value is Validity.VALID:
                valid_pool.append(sol)
            elif label.value is Validity.INVALID:
                invalid_pool.append(sol)
        if not valid_pool:
            stats["dropped_insufficient_valid"] += 1
            continue
        if len(invalid_pool) < 2:
            stats["dropped_insufficient_correct_invalid"] += 1
            continue
        if len(incorrect) < 2:
            stats["dropped_insufficient_incorrect"] += 1
            continue
        rng = derive_rng(seed, "controlled-sample", question.id)
        chosen = (
            [(sol, CandidateRole.VALID) for sol in rng.sample(valid_pool, 1)]
            + [(sol, CandidateRole.CORRECT_INVALID) for sol in rng.sample(invalid_pool, 2)]
            + [(sol, CandidateRole.INCORRECT) for sol in rng.sample(incorrect, 2)]
        )
        shuffle_seed = stable_hash64(seed, "controlled-shuffle", question.id)
        random.Random(shuffle_seed).shuffle(chosen)
        items.append(
            ControlledTestItem(question=question, candidates=tuple(chosen), shuffle_seed=shuffle_seed)
        )
        stats["items"] += 1
    return ControlledTestResult(items, stats)


# ---------------------------------------------------------------------------
# Mixing and size matching
# ---------------------------------------------------------------------------


def mix_datasets(
    baseline: Sequence[LabeledExample],
    high_quality: Sequence[LabeledExample],
    ratio: float,
    seed: int = 0,
) -> list[LabeledExample]:
    """Switch a seeded ratio-fraction of questions from baseline positives to
    the high-quality positive for the same question.

    A switched question contributes exactly the high-quality positive (any
    extra baseline positives for it are dropped); negatives pass through
    unchanged. With one baseline positive per question and full high-quality
    coverage, ratio 1 reproduces the high-quality positive set exactly.
    """
    if not 0.0 <= ratio <= 1.0:
        raise DomainError(f"ratio must be in [0,1], got {ratio}")
    high_pos = {
        ex.solution.question_id: ex for ex in high_quality if ex.label == 1
    }
    replaceable = sorted(
        {
            ex.solution.question_id
            for ex in baseline
            if ex.label == 1 and ex.solution.question_id in high_pos
        }
    )
    n_replace = int(ratio * len(replaceable) + 0.5)
    switched = set(derive_rng(seed, "mix", ratio).sample(replaceable, n_replace))
    mixed: list[LabeledExample] = []
    emitted: set[str] = set()
    for ex in baseline:
        qid = ex.solution.question_id
        if ex.label == 1 and qid in switched:
            if qid not in emitted:
                mixed.append(high_pos[qid])
                emitted.add(qid)
        else:
            mixed.append(ex)
    return mixed


def match_positive_counts(
    datasets: dict[str, list[LabeledExample]], seed: int = 0
) -> dict[str, list[LabeledExample]]:
    """Downsample every dataset's positives to the smallest positive count.

    Negatives are kept as-is; sampling is seeded per dataset name.
    """
    pos_counts = {
        name: sum(1 for ex in ds if ex.label == 1) for name, ds in datasets.items()
    }
    target = min(pos_counts.values())
    matched: dict[str, list[LabeledExample]] = {}
    for name, ds in datasets.items():
        positives = [ex for ex in ds if ex.label == 1]
        if len(positives) > target:
            keep_ids = set(
                ex.solution.id
                for ex in derive_rng(seed, "match-size", name).sample(positives, target)
            )
            matched[name] = [
                ex for ex in ds if ex.label == 0 or ex.solution.id in keep_ids
            ]
        else:
            matched[name] = list(ds)
    return matched
