"""Single-elimination rationale tournaments with majority-vote matches.

Each match issues an odd number of pairwise comparisons with alternating
presentation order and takes the majority of non-abstain votes. Brackets
pair participants by a seeded shuffle each round; odd rounds advance one
seeded-random bye. All randomness derives from (seed, question, round,
match) contexts, so traces are byte-reproducible and schedule-invariant.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .domain import (
    LabeledExample,
    Question,
    Solution,
    Strategy,
    answers_match,
    normalize_answer,
    solutions_by_question,
)
from .errors import DomainError, JudgeUnavailable, UnparsableAnswer
from .judges import JudgeVerdict, PairwiseJudge, Presentation, Winner, pairwise_judge
from .seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TournamentConfig:
    n_candidates: int = 8
    votes_per_match: int = 5
    seed: int = 0
    max_retries_on_tie: int = 2

    def __post_init__(self):
        if self.n_candidates < 1:
            raise DomainError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.votes_per_match < 1 or self.votes_per_match % 2 == 0:
            raise DomainError(
                f"votes_per_match must be odd and >= 1, got {self.votes_per_match}"
            )
        if self.max_retries_on_tie < 0:
            raise DomainError("max_retries_on_tie must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "votes_per_match": self.votes_per_match,
            "seed": self.seed,
            "max_retries_on_tie": self.max_retries_on_tie,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TournamentConfig":
        return cls(**d)


class DecidedBy(str, Enum):
    MAJORITY = "majority"
    RETRY_MAJORITY = "retry_majority"
    TIEBREAK_ID = "tiebreak_id"


@dataclass(frozen=True, slots=True)
class MatchRecord:
    left: str
    right: str
    verdicts: tuple[JudgeVerdict, ...]
    tally: tuple[int, int, int]  # (votes_left, votes_right, abstains) of final pass
    winner: str
    decided_by: DecidedBy
    passes: int = 1

    def to_dict(self) -> dict:
        return {
            "left": self.left,
            "right": self.right,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "tally": list(self.tally),
            "winner": self.winner,
            "decided_by": self.decided_by.value,
            "passes": self.passes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchRecord":
        return cls(
            left=d["left"],
            right=d["right"],
            verdicts=tuple(JudgeVerdict.from_dict(v) for v in d["verdicts"]),
            tally=tuple(d["tally"]),
            winner=d["winner"],
            decided_by=DecidedBy(d["decided_by"]),
            passes=int(d.get("passes", 1)),
        )


@dataclass(frozen=True, slots=True)
class TournamentTrace:
    question_id: str
    config: TournamentConfig
    rounds: tuple[tuple[MatchRecord, ...], ...]
    byes: tuple[tuple[int, str], ...]
    winner: str

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "config": self.config.to_dict(),
            "rounds": [[m.to_dict() for m in rnd] for rnd in self.rounds],
            "byes": [[r, sid] for r, sid in self.byes],
            "winner": self.winner,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TournamentTrace":
        return cls(
            question_id=d["question_id"],
            config=TournamentConfig.from_dict(d["config"]),
            rounds=tuple(
                tuple(MatchRecord.from_dict(m) for m in rnd) for rnd in d["rounds"]
            ),
            byes=tuple((int(r), sid) for r, sid in d["byes"]),
            winner=d["winner"],
        )


def select_candidates(
    pool: Sequence[Solution],
    question: Question,
    config: TournamentConfig,
    counters: dict | None = None,
) -> list[Solution]:
    """Filter to correct-answer solutions, then seed-sample at most N of them.

    An empty result is a valid signal to skip the question. Unparsable
    answers count as incorrect (and are tallied when counters is given).
    """
    correct = []
    for sol in pool:
        if sol.question_id != question.id:
            raise DomainError(f"solution {sol.id} does not belong to {question.id}")
        try:
            matched = answers_match(sol.answer, question.gold_answer, question.task_kind)
        except UnparsableAnswer:  # answers_match already maps this, belt and braces
            matched = False
        if matched:
            correct.append(sol)
        elif counters is not None and _unparsable(sol.answer, question):
            counters["unparsable_answers"] = counters.get("unparsable_answers", 0) + 1
    rng = derive_rng(config.seed, "select", question.id)
    return rng.sample(correct, min(config.n_candidates, len(correct)))


def _unparsable(answer: str, question: Question) -> bool:
    try:
        normalize_answer(answer, question.task_kind)
        return False
    except UnparsableAnswer:
        return True


def run_match(
    question: Question,
    a: Solution,
    b: Solution,
    judge: PairwiseJudge,
    config: TournamentConfig,
    context: str = "",
) -> MatchRecord:
    """One S-vote majority match between two solutions of the same question.

    Presentation alternates ab, ba, ab, ... across the S votes. A tie (only
    possible through abstains, since S is odd) triggers up to
    max_retries_on_tie fresh vote passes, then falls back to the smaller
    solution id. Raises JudgeUnavailable only when every vote of every pass
    failed at the transport level.
    """
    if a.question_id != b.question_id:
        raise DomainError(f"cannot match {a.id} vs {b.id}: different questions")
    s = config.votes_per_match
    verdicts: tuple[JudgeVerdict, ...] = ()
    tally = (0, 0, s)
    failed_passes = 0
    total_passes = config.max_retries_on_tie + 1
    for pass_idx in range(total_passes):
        pass_verdicts = []
        for v in range(s):
            presentation = Presentation.AB if v % 2 == 0 else Presentation.BA
            pass_verdicts.append(
                pairwise_judge(
                    judge, question, question.gold_answer, a, b, presentation,
                    context=f"{context}/p{pass_idx}/v{v}",
                )
            )
        votes_a = sum(1 for v in pass_verdicts if v.winner is Winner.FIRST)
        votes_b = sum(1 for v in pass_verdicts if v.winner is Winner.SECOND)
        verdicts = tuple(pass_verdicts)
        tally = (votes_a, votes_b, s - votes_a - votes_b)
        if all(v.transport_failed for v in pass_verdicts):
            failed_passes += 1
        if votes_a != votes_b:
            winner = a.id if votes_a > votes_b else b.id
            decided = DecidedBy.MAJORITY if pass_idx == 0 else DecidedBy.RETRY_MAJORITY
            return MatchRecord(a.id, b.id, verdicts, tally, winner, decided, pass_idx + 1)
    if failed_passes == total_passes:
        raise JudgeUnavailable(
            f"all {total_passes} vote passes failed for {a.id} vs {b.id}"
        )
    winner = min(a.id, b.id)
    return MatchRecord(a.id, b.id, verdicts, tally, winner, DecidedBy.TIEBREAK_ID, total_passes)


def run_tournament(
    question: Question,
    candidates: Sequence[Solution],
    judge: PairwiseJudge,
    config: TournamentConfig,
    jobs: int = 1,
) -> tuple[Solution, TournamentTrace]:
    """Eliminate until one solution remains; returns the winner and the trace.

    A single candidate wins immediately with zero rounds. With an odd
    participant count one seeded-random participant advances on a bye.
    """
    if not candidates:
        raise DomainError(f"{question.id}: empty candidate list")
    by_id = {sol.id: sol for sol in candidates}
    if len(by_id) != len(candidates):
        raise DomainError(f"{question.id}: duplicate candidate ids")
    for sol in candidates:
        if sol.question_id != question.id:
            raise DomainError(f"candidate {sol.id} does not belong to {question.id}")

    participants = list(candidates)
    rounds: list[tuple[MatchRecord, ...]] = []
    byes: list[tuple[int, str]] = []
    round_idx = 0
    while len(participants) > 1:
        order = list(participants)
        derive_rng(config.seed, "pairing", question.id, round_idx).shuffle(order)
        bye = order.pop() if len(order) % 2 == 1 else None
        pairs = [(order[i], order[i + 1]) for i in range(0, len(order), 2)]

        def _play(idx_pair):
            idx, (left, right) = idx_pair
            return run_match(
                question, left, right, judge, config,
                context=f"{question.id}/r{round_idx}/m{idx}",
            )

        records: list[MatchRecord] = []
        try:
            if jobs > 1 and len(pairs) > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    records = list(pool.map(_play, enumerate(pairs)))
            else:
                for item in enumerate(pairs):
                    records.append(_play(item))
        except JudgeUnavailable as exc:
            # surface the trace up to the failure point on the exception
            if records:
                rounds.append(tuple(records))
            exc.partial_trace = TournamentTrace(
                question_id=question.id,
                config=config,
                rounds=tuple(rounds),
                byes=tuple(byes),
                winner="",
            )
            raise

        rounds.append(tuple(records))
        participants = [by_id[rec.winner] for rec in records]
        if bye is not None:
            byes.append((round_idx, bye.id))
            participants.append(bye)
        round_idx += 1

    winner = participants[0]
    trace = TournamentTrace(
        question_id=question.id,
        config=config,
        rounds=tuple(rounds),
        byes=tuple(byes),
        winner=winner.id,
    )
    return winner, trace


@dataclass
class RepsDatasetResult:
    examples: list[LabeledExample]
    traces: list[TournamentTrace]
    counters: dict[str, int] = field(default_factory=dict)


def build_reps_dataset(
    corpus: Sequence[Question],
    pool: Sequence[Solution],
    judge: PairwiseJudge,
    config: TournamentConfig,
    jobs: int = 1,
) -> RepsDatasetResult:
    """Tournament winner per question labeled 1, incorrect answers labeled 0.

    Questions with no correct-answer solution contribute only negatives and
    are counted. A judge failure skips that question's positive (logged) but
    never aborts the run.
    """
    grouped = solutions_by_question(pool)
    counters = {
        "questions": len(corpus),
        "questions_without_correct": 0,
        "judge_failed_questions": 0,
        "unparsable_answers": 0,
        "positives": 0,
        "negatives": 0,
    }
    examples: list[LabeledExample] = []
    traces: list[TournamentTrace] = []

    def _process(question: Question):
        solutions = grouped.get(question.id, [])
        local_counters: dict[str, int] = {}
        candidates = select_candidates(solutions, question, config, local_counters)
        winner = trace = None
        failed = False
        if candidates:
            try:
                winner, trace = run_tournament(question, candidates, judge, config)
            except JudgeUnavailable as exc:
                logger.warning("skipping positives for %s: %s", question.id, exc)
                trace = getattr(exc, "partial_trace", None)
                failed = True
        negatives = [
            sol
            for sol in solutions
            if not answers_match(sol.answer, question.gold_answer, question.task_kind)
        ]
        return question, winner, trace, negatives, failed, local_counters

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(_process, corpus))
    else:
        results = [_process(q) for q in corpus]

    for question, winner, trace, negatives, failed, local in results:
        counters["unparsable_answers"] += local.get("unparsable_answers", 0)
        if trace is not None:
            traces.append(trace)
        if winner is not None:
            examples.append(LabeledExample(winner, 1, Strategy.REPS))
            counters["positives"] += 1
        elif failed:
            counters["judge_failed_questions"] += 1
        else:
            counters["questions_without_correct"] += 1
        for sol in negatives:
            examples.append(LabeledExample(sol, 0, Strategy.REPS))
            counters["negatives"] += 1

    return RepsDatasetResult(examples=examples, traces=traces, counters=counters)
