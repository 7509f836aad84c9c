"""Core data model: questions, solutions, labels, and answer normalization.

All value types are immutable, JSON-serializable, and safe to share between
workers. Corpus files are JSONL (one object per line, UTF-8); unknown keys
survive a round-trip via the ``extras`` field.
"""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import DomainError, UnparsableAnswer

logger = logging.getLogger(__name__)


class TaskKind(str, Enum):
    YES_NO = "yes_no"
    MULTIPLE_CHOICE = "multiple_choice"
    EXTRACTIVE = "extractive"


class SolutionSource(str, Enum):
    GENERATED = "generated"
    ANSWER_SWAPPED = "answer_swapped"
    SYNTHETIC = "synthetic"


class Strategy(str, Enum):
    LOW_QUALITY = "low_quality"
    BASELINE = "baseline"
    HIGH_QUALITY = "high_quality"
    REPS = "reps"


class Validity(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


class JudgeSource(str, Enum):
    ORACLE_FILE = "oracle_file"
    REMOTE_JUDGE = "remote_judge"
    SIMULATED = "simulated"


class CandidateRole(str, Enum):
    VALID = "valid"
    CORRECT_INVALID = "correct_invalid"
    INCORRECT = "incorrect"


# ---------------------------------------------------------------------------
# Answer normalization
# ---------------------------------------------------------------------------

_YESNO_CLAUSE = re.compile(r"answer\s+is[\s:,]*[\"'(]*\s*(yes|no)\b", re.IGNORECASE)
_YESNO_TOKEN = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_MC_CLAUSE = re.compile(r"answer\s+is[\s:,]*[\"'(]*\s*([A-Za-z])\b", re.IGNORECASE)
_MC_TRAILING = re.compile(r"(?<![0-9A-Za-z])([A-Za-z])[\s.)\"']*$")
_EXTRACTIVE_CLAUSE = re.compile(r"answer\s+is[\s:,]*", re.IGNORECASE)
_ARTICLE = re.compile(r"\b(a|an|the)\b", re.IGNORECASE)
_NUMERIC = re.compile(r"^-?\d[\d,]*\.?\d*$")

# Trailing measure words dropped when everything before them is numeric, so
# "86 years" and "86" compare equal. Kept deliberately small; extend only
# with a golden test.
_UNIT_WORDS = frozenset(
    "year years day days month months week weeks percent point points "
    "yard yards meter meters mile miles foot feet people time times "
    "dollar dollars".split()
)


def _last_match(pattern: re.Pattern, text: str) -> re.Match | None:
    found = None
    for found in pattern.finditer(text):
        pass
    return found


def _em_normalize(text: str) -> str:
    """Lowercase, drop articles, strip token-edge punctuation, fix whitespace."""
    lowered = _ARTICLE.sub(" ", text.lower())
    tokens = [tok.strip(string.punctuation) for tok in lowered.split()]
    tokens = [tok for tok in tokens if tok]
    while (
        len(tokens) >= 2
        and tokens[-1] in _UNIT_WORDS
        and all(_NUMERIC.match(tok) for tok in tokens[:-1])
    ):
        tokens.pop()
    return " ".join(tokens)


def normalize_answer(raw: str, task_kind: TaskKind) -> str:
    """Extract and canonicalize the final answer from free text.

    Uses a last-match rule: the final occurrence of an "answer is X" clause
    wins, then a trailing bare answer token. Raises UnparsableAnswer when no
    pattern is found; callers decide whether that means "incorrect".
    """
    if raw is None or not raw.strip():
        raise UnparsableAnswer("empty answer text")
    task_kind = TaskKind(task_kind)

    if task_kind is TaskKind.YES_NO:
        m = _last_match(_YESNO_CLAUSE, raw) or _last_match(_YESNO_TOKEN, raw)
        if m is None:
            raise UnparsableAnswer(f"no yes/no answer in {raw!r}")
        return m.group(1).lower()

    if task_kind is TaskKind.MULTIPLE_CHOICE:
        m = _last_match(_MC_CLAUSE, raw)
        if m is None:
            m = _MC_TRAILING.search(raw.strip())
        if m is None:
            raise UnparsableAnswer(f"no option letter in {raw!r}")
        return m.group(1).upper()

    # extractive: take the text after the last "answer is", else the whole
    # string, then apply exact-match normalization
    m = _last_match(_EXTRACTIVE_CLAUSE, raw)
    span = raw[m.end():] if m is not None else raw
    normalized = _em_normalize(span)
    if not normalized:
        raise UnparsableAnswer(f"nothing left after normalizing {raw!r}")
    return normalized


def answers_match(candidate: str, gold: str, task_kind: TaskKind) -> bool:
    """True iff both answers normalize to the same string.

    Unparsable input on either side is a non-match (logged as a warning).
    """
    try:
        return normalize_answer(candidate, task_kind) == normalize_answer(gold, task_kind)
    except UnparsableAnswer as exc:
        logger.warning("treating unparsable answer as non-match: %s", exc)
        return False


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=True)
class Question:
    """One task instance with its gold answer and optional evidence."""

    id: str
    task_kind: TaskKind
    text: str
    gold_answer: str
    passage: str | None = None
    options: tuple[tuple[str, str], ...] | None = None
    supporting_facts: tuple[str, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        if not self.id:
            raise DomainError("question id must be non-empty")
        if self.task_kind is TaskKind.MULTIPLE_CHOICE:
            if not self.options:
                raise DomainError(f"{self.id}: multiple_choice requires options")
            letters = {letter for letter, _ in self.options}
            if self.gold_answer not in letters:
                raise DomainError(
                    f"{self.id}: gold answer {self.gold_answer!r} not an option letter"
                )
        if self.task_kind is TaskKind.YES_NO:
            try:
                normalized = normalize_answer(self.gold_answer, TaskKind.YES_NO)
            except UnparsableAnswer as exc:
                raise DomainError(f"{self.id}: yes_no gold must normalize to yes/no") from exc
            if normalized not in ("yes", "no"):
                raise DomainError(f"{self.id}: yes_no gold must normalize to yes/no")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "task_kind": self.task_kind.value,
            "text": self.text,
            "passage": self.passage,
            "options": [list(o) for o in self.options] if self.options else None,
            "gold_answer": self.gold_answer,
            "supporting_facts": list(self.supporting_facts),
        }
        d.update(self.extras)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Question":
        d = dict(d)
        options = d.pop("options", None)
        return cls(
            id=d.pop("id"),
            task_kind=TaskKind(d.pop("task_kind")),
            text=d.pop("text"),
            gold_answer=d.pop("gold_answer"),
            passage=d.pop("passage", None),
            options=tuple((o[0], o[1]) for o in options) if options else None,
            supporting_facts=tuple(d.pop("supporting_facts", ()) or ()),
            extras=d,
        )


@dataclass(frozen=True, slots=True, eq=True)
class Solution:
    """A rationale paired with its final answer."""

    id: str
    question_id: str
    rationale: str
    answer: str
    source: SolutionSource = SolutionSource.GENERATED
    gen_temperature: float | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "source", SolutionSource(self.source))
        if self.source is SolutionSource.GENERATED and not self.rationale:
            raise DomainError(f"{self.id}: generated solution needs a rationale")

    @property
    def rationale_len(self) -> int:
        # always recomputed; never trusted from input files
        return len(self.rationale)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "question_id": self.question_id,
            "rationale": self.rationale,
            "answer": self.answer,
            "source": self.source.value,
            "gen_temperature": self.gen_temperature,
        }
        d.update(self.extras)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        d = dict(d)
        d.pop("rationale_len", None)  # derived, recomputed
        return cls(
            id=d.pop("id"),
            question_id=d.pop("question_id"),
            rationale=d.pop("rationale"),
            answer=d.pop("answer"),
            source=SolutionSource(d.pop("source", "generated")),
            gen_temperature=d.pop("gen_temperature", None),
            extras=d,
        )


@dataclass(frozen=True, slots=True)
class ValidityLabel:
    value: Validity
    judge_source: JudgeSource

    def to_dict(self) -> dict:
        return {"value": self.value.value, "judge_source": self.judge_source.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ValidityLabel":
        return cls(Validity(d["value"]), JudgeSource(d["judge_source"]))


@dataclass(frozen=True, slots=True)
class LabeledExample:
    """A solution with its binary training label and producing strategy."""

    solution: Solution
    label: int
    strategy: Strategy

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.label not in (0, 1):
            raise DomainError(f"label must be 0 or 1, got {self.label!r}")

    def to_dict(self) -> dict:
        return {
            "solution": self.solution.to_dict(),
            "label": self.label,
            "strategy": self.strategy.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledExample":
        return cls(
            solution=Solution.from_dict(d["solution"]),
            label=int(d["label"]),
            strategy=Strategy(d["strategy"]),
        )


_ROLE_QUOTA = {
    CandidateRole.VALID: 1,
    CandidateRole.CORRECT_INVALID: 2,
    CandidateRole.INCORRECT: 2,
}


@dataclass(frozen=True, slots=True)
class ControlledTestItem:
    """One question with exactly 5 role-tagged candidates (1/2/2 composition)."""

    question: Question
    candidates: tuple[tuple[Solution, CandidateRole], ...]
    shuffle_seed: int = 0

    def __post_init__(self):
        counts: dict[CandidateRole, int] = {}
        for _, role in self.candidates:
            counts[role] = counts.get(role, 0) + 1
        if len(self.candidates) != 5 or counts != _ROLE_QUOTA:
            raise DomainError(
                f"{self.question.id}: candidate composition must be 1 valid / "
                f"2 correct_invalid / 2 incorrect, got {counts}"
            )
        for sol, role in self.candidates:
            matches = answers_match(sol.answer, self.question.gold_answer, self.question.task_kind)
            if role is CandidateRole.INCORRECT and matches:
                raise DomainError(f"{sol.id}: incorrect-role candidate carries the gold answer")
            if role is not CandidateRole.INCORRECT and not matches:
                raise DomainError(f"{sol.id}: {role.value} candidate must carry the gold answer")

    def to_dict(self) -> dict:
        return {
            "question": self.question.to_dict(),
            "candidates": [
                {"solution": sol.to_dict(), "role": role.value}
                for sol, role in self.candidates
            ],
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlledTestItem":
        return cls(
            question=Question.from_dict(d["question"]),
            candidates=tuple(
                (Solution.from_dict(c["solution"]), CandidateRole(c["role"]))
                for c in d["candidates"]
            ),
            shuffle_seed=int(d.get("shuffle_seed", 0)),
        )


# ---------------------------------------------------------------------------
# JSONL corpus IO
# ---------------------------------------------------------------------------


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}:{line_no}: invalid JSON ({exc})") from exc


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def load_questions(path: str | Path) -> list[Question]:
    questions = [Question.from_dict(d) for d in read_jsonl(path)]
    seen: set[str] = set()
    for q in questions:
        if q.id in seen:
            raise DomainError(f"duplicate question id {q.id!r} in {path}")
        seen.add(q.id)
    return questions


def save_questions(path: str | Path, questions: Iterable[Question]) -> int:
    return write_jsonl(path, (q.to_dict() for q in questions))


def load_solutions(path: str | Path) -> list[Solution]:
    solutions = [Solution.from_dict(d) for d in read_jsonl(path)]
    seen: set[str] = set()
    for s in solutions:
        if s.id in seen:
            raise DomainError(f"duplicate solution id {s.id!r} in {path}")
        seen.add(s.id)
    return solutions


def save_solutions(path: str | Path, solutions: Iterable[Solution]) -> int:
    return write_jsonl(path, (s.to_dict() for s in solutions))


def load_labeled(path: str | Path) -> list[LabeledExample]:
    return [LabeledExample.from_dict(d) for d in read_jsonl(path)]


def save_labeled(path: str | Path, examples: Iterable[LabeledExample]) -> int:
    return write_jsonl(path, (ex.to_dict() for ex in examples))


def load_test_items(path: str | Path) -> list[ControlledTestItem]:
    return [ControlledTestItem.from_dict(d) for d in read_jsonl(path)]


def save_test_items(path: str | Path, items: Iterable[ControlledTestItem]) -> int:
    return write_jsonl(path, (item.to_dict() for item in items))


def solutions_by_question(pool: Iterable[Solution]) -> dict[str, list[Solution]]:
    """Group pool solutions by question id, preserving pool order."""
    grouped: dict[str, list[Solution]] = {}
    for sol in pool:
        grouped.setdefault(sol.question_id, []).append(sol)
    return grouped
