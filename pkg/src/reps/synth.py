"""Synthetic yes/no benchmark with a planted, learnable validity signal.

Rationales are filler-word sequences. Two marker vocabularies carry the
signal: validity markers appear with probability ``marker_rate_valid`` in
ground-truth-valid rationales and ``marker_rate_invalid`` otherwise;
correctness markers do the same for correct vs incorrect final answers.
Every rationale ends with a parseable "Therefore, the answer is X." clause,
and every solution records its ground truth in the ``gt_valid`` extra so
simulated judges and oracles can read it.

Role counts per question are exact, so controlled-test quotas are always
satisfiable and every question has at least one valid correct solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .domain import Question, Solution, SolutionSource, TaskKind
from .errors import DomainError
from .seeding import derive_rng


@dataclass(frozen=True, slots=True)
class SynthConfig:
    n_questions: int = 100
    valid_correct_per_question: int = 2
    invalid_correct_per_question: int = 4
    incorrect_per_question: int = 4
    marker_rate_valid: float = 0.9
    marker_rate_invalid: float = 0.2
    n_validity_markers: int = 6
    correctness_marker_rate_correct: float = 0.9
    correctness_marker_rate_incorrect: float = 0.2
    n_correctness_markers: int = 6
    filler_vocab_size: int = 200
    rationale_words_valid: tuple[float, float] = (30.0, 5.0)  # (mean, sd)
    rationale_words_invalid: tuple[float, float] = (30.0, 5.0)
    question_words: tuple[int, int] = (8, 14)
    seed: int = 0
    id_prefix: str = "syn"

    def __post_init__(self):
        if self.n_questions < 1:
            raise DomainError("n_questions must be >= 1")
        for rate in (
            self.marker_rate_valid,
            self.marker_rate_invalid,
            self.correctness_marker_rate_correct,
            self.correctness_marker_rate_incorrect,
        ):
            if not 0.0 <= rate <= 1.0:
                raise DomainError(f"marker rate {rate} outside [0,1]")


@dataclass
class SynthBundle:
    questions: list[Question]
    pool: list[Solution]
    validity: dict[str, bool] = field(default_factory=dict)

    @property
    def truth(self) -> dict[str, bool]:
        return self.validity


def _words(rng, vocab_size: int, count: int) -> list[str]:
    return [f"w{rng.randrange(vocab_size)}" for _ in range(count)]


def _rationale(rng, cfg: SynthConfig, valid: bool, correct: bool, answer: str) -> str:
    mean, sd = cfg.rationale_words_valid if valid else cfg.rationale_words_invalid
    n_fill = max(3, round(rng.gauss(mean, sd)))
    tokens = _words(rng, cfg.filler_vocab_size, n_fill)
    v_rate = cfg.marker_rate_valid if valid else cfg.marker_rate_invalid
    for m in range(cfg.n_validity_markers):
        if rng.random() < v_rate:
            tokens.insert(rng.randrange(len(tokens) + 1), f"vm{m}")
    c_rate = (
        cfg.correctness_marker_rate_correct
        if correct
        else cfg.correctness_marker_rate_incorrect
    )
    for m in range(cfg.n_correctness_markers):
        if rng.random() < c_rate:
            tokens.insert(rng.randrange(len(tokens) + 1), f"cm{m}")
    return " ".join(tokens) + f". Therefore, the answer is {answer}."


def _roles(cfg: SynthConfig) -> Iterator[tuple[bool, bool]]:
    # (correct, valid) per solution slot
    yield from ((True, True),) * cfg.valid_correct_per_question
    yield from ((True, False),) * cfg.invalid_correct_per_question
    yield from ((False, False),) * cfg.incorrect_per_question


def generate_benchmark(cfg: SynthConfig) -> SynthBundle:
    """Generate a corpus and solution pool with exact per-question role counts."""
    questions: list[Question] = []
    pool: list[Solution] = []
    validity: dict[str, bool] = {}
    for qi in range(cfg.n_questions):
        qid = f"{cfg.id_prefix}-q{qi:05d}"
        qrng = derive_rng(cfg.seed, "synth-question", qid)
        gold = qrng.choice(["yes", "no"])
        lo, hi = cfg.question_words
        text = " ".join(_words(qrng, cfg.filler_vocab_size, qrng.randint(lo, hi))) + "?"
        questions.append(
            Question(id=qid, task_kind=TaskKind.YES_NO, text=text, gold_answer=gold)
        )
        roles = list(_roles(cfg))
        qrng.shuffle(roles)  # id order must not encode the role
        for si, (correct, valid) in enumerate(roles):
            sid = f"{qid}-s{si:02d}"
            srng = derive_rng(cfg.seed, "synth-solution", sid)
            answer = gold if correct else ("no" if gold == "yes" else "yes")
            rationale = _rationale(srng, cfg, valid, correct, answer)
            pool.append(
                Solution(
                    id=sid,
                    question_id=qid,
                    rationale=rationale,
                    answer=answer,
                    source=SolutionSource.SYNTHETIC,
                    gen_temperature=0.7,
                    extras={"gt_valid": valid},
                )
            )
            validity[sid] = valid
    return SynthBundle(questions=questions, pool=pool, validity=validity)


def controlled_test_config(n_questions: int, seed: int = 0, id_prefix: str = "ct") -> SynthConfig:
    """Lean preset for chance-rate studies: exactly the 1/2/2 role quotas."""
    return SynthConfig(
        n_questions=n_questions,
        valid_correct_per_question=1,
        invalid_correct_per_question=2,
        incorrect_per_question=2,
        rationale_words_valid=(12.0, 3.0),
        rationale_words_invalid=(12.0, 3.0),
        seed=seed,
        id_prefix=id_prefix,
    )
