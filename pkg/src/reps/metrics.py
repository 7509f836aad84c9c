"""Rationale/Answer Accuracy, task performance, and head-to-head win rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .domain import (
    CandidateRole,
    ControlledTestItem,
    Question,
    Solution,
    answers_match,
    solutions_by_question,
)
from .errors import DomainError
from .judges import PairwiseJudge, Presentation, Winner, pairwise_judge
from .seeding import derive_rng
from .verifier import Verifier, select_answer


@dataclass
class EvalReport:
    """Controlled-test evaluation: RA counts picks of the unique valid
    candidate, AA counts picks carrying the correct answer."""

    n_items: int
    rationale_accuracy: float
    answer_accuracy: float
    selections: list[tuple[str, str, str]]  # (question_id, solution_id, role)
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "rationale_accuracy": self.rationale_accuracy,
            "answer_accuracy": self.answer_accuracy,
            "selections": [list(sel) for sel in self.selections],
            "seeds": self.seeds,
        }

    def selection_rows(self) -> list[dict]:
        return [
            {"question_id": q, "solution_id": s, "role": r}
            for q, s, r in self.selections
        ]


def evaluate_controlled(
    verifier: Verifier, items: Sequence[ControlledTestItem], seeds: dict | None = None
) -> EvalReport:
    """Argmax-select among each item's five candidates and score the roles."""
    if not items:
        raise DomainError("evaluate_controlled needs at least one item")
    selections = []
    ra_hits = 0
    aa_hits = 0
    for item in items:
        roles = {sol.id: role for sol, role in item.candidates}
        chosen = select_answer(verifier, item.question, [sol for sol, _ in item.candidates])
        role = roles[chosen.id]
        selections.append((item.question.id, chosen.id, role.value))
        if role is CandidateRole.VALID:
            ra_hits += 1
        if role in (CandidateRole.VALID, CandidateRole.CORRECT_INVALID):
            aa_hits += 1
    n = len(items)
    return EvalReport(
        n_items=n,
        rationale_accuracy=ra_hits / n,
        answer_accuracy=aa_hits / n,
        selections=selections,
        seeds=seeds or {},
    )


@dataclass
class TaskPerformanceReport:
    value: float
    n_questions: int
    n_excluded: int
    selections: list[tuple[str, str, bool]]  # (question_id, solution_id, correct)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "n_questions": self.n_questions,
            "n_excluded": self.n_excluded,
            "selections": [list(sel) for sel in self.selections],
        }


def task_performance(
    verifier: Verifier,
    corpus: Sequence[Question],
    pool: Sequence[Solution],
    k: int = 5,
    seed: int = 0,
) -> TaskPerformanceReport:
    """Sample up to k pooled solutions per question, pick the verifier's
    argmax, and score its answer against gold (accuracy / exact match)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    grouped = solutions_by_question(pool)
    selections = []
    hits = 0
    excluded = 0
    for question in corpus:
        available = grouped.get(question.id, [])
        if not available:
            excluded += 1
            continue
        rng = derive_rng(seed, "task-perf", question.id)
        sample = rng.sample(available, min(k, len(available)))
        chosen = select_answer(verifier, question, sample)
        correct = answers_match(chosen.answer, question.gold_answer, question.task_kind)
        selections.append((question.id, chosen.id, correct))
        hits += correct
    n = len(selections)
    value = hits / n if n else 0.0
    return TaskPerformanceReport(value, n, excluded, selections)


@dataclass
class WinRateReport:
    """Head-to-head outcome for method A's picks vs method B's picks.

    ``rate`` is None (never 0.5) when no pair was comparable.
    """

    rate: float | None
    n_pairs: int
    n_identical: int
    n_decided: int
    n_excluded: int
    wins_a: int
    wins_b: int

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "n_pairs": self.n_pairs,
            "n_identical": self.n_identical,
            "n_decided": self.n_decided,
            "n_excluded": self.n_excluded,
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
        }


def win_rate(
    judge: PairwiseJudge,
    comparisons: Sequence[tuple[Question, Solution, Solution]],
    seed: int = 0,
) -> WinRateReport:
    """Judge each (a, b) pair in both presentation orders, with a seeded
    third call when the two are level; identical picks are excluded up front.

    The reported rate is the fraction of decided pairs won by the first
    method.
    """
    n_identical = 0
    wins_a = 0
    wins_b = 0
    n_excluded = 0
    for question, a, b in comparisons:
        if a.id == b.id:
            n_identical += 1
            continue
        context = f"winrate/{question.id}"
        verdicts = [
            pairwise_judge(judge, question, question.gold_answer, a, b,
                           Presentation.AB, context=f"{context}/o1"),
            pairwise_judge(judge, question, question.gold_answer, a, b,
                           Presentation.BA, context=f"{context}/o2"),
        ]
        votes_a = sum(1 for v in verdicts if v.winner is Winner.FIRST)
        votes_b = sum(1 for v in verdicts if v.winner is Winner.SECOND)
        if votes_a == votes_b:
            third_order = derive_rng(seed, "winrate-order", question.id).choice(
                [Presentation.AB, Presentation.BA]
            )
            tiebreak = pairwise_judge(
                judge, question, question.gold_answer, a, b, third_order,
                context=f"{context}/o3",
            )
            votes_a += tiebreak.winner is Winner.FIRST
            votes_b += tiebreak.winner is Winner.SECOND
        if votes_a > votes_b:
            wins_a += 1
        elif votes_b > votes_a:
            wins_b += 1
        else:
            n_excluded += 1
    n_decided = wins_a + wins_b
    rate = wins_a / n_decided if n_decided else None
    return WinRateReport(
        rate=rate,
        n_pairs=len(comparisons),
        n_identical=n_identical,
        n_decided=n_decided,
        n_excluded=n_excluded,
        wins_a=wins_a,
        wins_b=wins_b,
    )
