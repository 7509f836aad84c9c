"""Pairwise judges and single-answer scorers.

A judge sees two rationales in a concrete presentation order and casts a
positional vote ("1" = first shown, "2" = second shown). ``pairwise_judge``
wraps any judge and maps the positional vote back onto the logical (a, b)
pair, so callers upstream never reason about presentation order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

from .domain import Question, Solution
from .errors import (
    DomainError,
    InvalidDistribution,
    JudgeUnavailable,
    VerdictUnparsable,
)
from .seeding import derive_rng


class Winner(str, Enum):
    FIRST = "first"
    SECOND = "second"
    ABSTAIN = "abstain"


class Presentation(str, Enum):
    AB = "ab"
    BA = "ba"


@dataclass(frozen=True, slots=True)
class PositionalVote:
    """Raw judge output: 1 prefers the first-shown rationale, 2 the second,
    0 abstains."""

    position: int
    justification: str = ""
    raw: str | None = None
    transport_failed: bool = False


@dataclass(frozen=True, slots=True)
class JudgeRequest:
    """What a judge gets to see, in presentation order."""

    question: Question
    gold_answer: str
    first: Solution
    second: Solution
    context: str = ""


@runtime_checkable
class PairwiseJudge(Protocol):
    name: str

    def vote(self, request: JudgeRequest) -> PositionalVote: ...


@dataclass(frozen=True, slots=True)
class JudgeVerdict:
    """Outcome of one comparison, expressed on the logical (a, b) pair."""

    winner: Winner
    justification: str = ""
    presented_order: tuple[str, str] = ("", "")
    raw: str | None = None
    transport_failed: bool = False

    def to_dict(self) -> dict:
        return {
            "winner": self.winner.value,
            "justification": self.justification,
            "presented_order": list(self.presented_order),
            "raw": self.raw,
            "transport_failed": self.transport_failed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeVerdict":
        return cls(
            winner=Winner(d["winner"]),
            justification=d.get("justification", ""),
            presented_order=tuple(d.get("presented_order", ("", ""))),
            raw=d.get("raw"),
            transport_failed=bool(d.get("transport_failed", False)),
        )


def pairwise_judge(
    judge: PairwiseJudge,
    question: Question,
    gold_answer: str,
    a: Solution,
    b: Solution,
    presentation: Presentation,
    context: str = "",
) -> JudgeVerdict:
    """Run one comparison and refer the winner back to the logical pair.

    ``winner = FIRST`` always means solution ``a`` no matter which side was
    shown first. Transport failures surface as abstains flagged
    ``transport_failed`` so a single flaky call cannot kill a tournament.
    """
    if not a.rationale or not b.rationale:
        raise DomainError("pairwise judging requires non-empty rationales")
    presentation = Presentation(presentation)
    first, second = (a, b) if presentation is Presentation.AB else (b, a)
    request = JudgeRequest(question, gold_answer, first, second, context)
    try:
        vote = judge.vote(request)
    except JudgeUnavailable as exc:
        return JudgeVerdict(
            winner=Winner.ABSTAIN,
            justification=str(exc),
            presented_order=(first.id, second.id),
            raw=None,
            transport_failed=True,
        )
    if vote.position == 0:
        winner = Winner.ABSTAIN
    elif vote.position == 1:
        winner = Winner.FIRST if presentation is Presentation.AB else Winner.SECOND
    elif vote.position == 2:
        winner = Winner.SECOND if presentation is Presentation.AB else Winner.FIRST
    else:
        raise DomainError(f"judge returned invalid position {vote.position!r}")
    return JudgeVerdict(
        winner=winner,
        justification=vote.justification,
        presented_order=(first.id, second.id),
        raw=vote.raw,
        transport_failed=vote.transport_failed,
    )


# ---------------------------------------------------------------------------
# Verdict parsing
# ---------------------------------------------------------------------------

_PREFERRED_MARKER = re.compile(r"preferred\s+explanation", re.IGNORECASE)
_STANDALONE_INDEX = re.compile(r"(?<![0-9A-Za-z])([12])(?![0-9A-Za-z])(?!\.\d)")


def parse_verdict(raw: str) -> Winner:
    """Extract the preferred index from judge output; never raises.

    Looks for the last standalone 1/2 after the final "Preferred Explanation"
    marker, falling back to the last standalone 1/2 anywhere, else abstains.
    """
    if not raw:
        return Winner.ABSTAIN
    marker = None
    for marker in _PREFERRED_MARKER.finditer(raw):
        pass
    region = raw[marker.end():] if marker is not None else raw
    hit = None
    for hit in _STANDALONE_INDEX.finditer(region):
        pass
    if hit is None and marker is not None:
        for hit in _STANDALONE_INDEX.finditer(raw):
            pass
    if hit is None:
        return Winner.ABSTAIN
    return Winner.FIRST if hit.group(1) == "1" else Winner.SECOND


# ---------------------------------------------------------------------------
# Simulated judge
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SimJudgeParams:
    """Parametric judge model: accuracy on valid-vs-invalid pairs plus a
    logistic length bias."""

    p_accuracy: float
    length_bias: float = 0.0
    abstain_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_accuracy <= 1.0:
            raise DomainError(f"p_accuracy must be in [0,1], got {self.p_accuracy}")
        if self.length_bias < 0.0:
            raise DomainError(f"length_bias must be >= 0, got {self.length_bias}")
        if not 0.0 <= self.abstain_rate < 1.0:
            raise DomainError(f"abstain_rate must be in [0,1), got {self.abstain_rate}")


def _sigmoid(x: float) -> float:
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


def simulated_preference_prob(
    better_is_a: bool | None,
    len_a: int,
    len_b: int,
    params: SimJudgeParams,
) -> float:
    """P(judge prefers a) under the logistic accuracy + length-bias model.

    better_is_a=None means neither rationale is ground-truth better, giving a
    0.5 base rate so only the length bias acts.
    """
    if len_a < 1 or len_b < 1:
        raise DomainError("rationale lengths must be >= 1")
    if better_is_a is None:
        p_eff = 0.5
    else:
        p_eff = params.p_accuracy if better_is_a else 1.0 - params.p_accuracy
    bias = params.length_bias * (len_a - len_b) / (len_a + len_b)
    if p_eff <= 0.0:
        return 0.0
    if p_eff >= 1.0:
        return 1.0
    return _sigmoid(math.log(p_eff / (1.0 - p_eff)) + bias)


def truth_from_pool(pool: Sequence[Solution], key: str = "gt_valid") -> dict[str, bool]:
    """Build a solution-id -> ground-truth-validity map from pool extras."""
    return {sol.id: bool(sol.extras[key]) for sol in pool if key in sol.extras}


@dataclass
class SimulatedJudge:
    """Stochastic judge driven by ground-truth validity and rationale length.

    Each call derives its own RNG stream from (seed, context, pair ids), so
    verdicts are reproducible and independent of scheduling.
    """

    params: SimJudgeParams
    truth: Mapping[str, bool]

    @property
    def name(self) -> str:
        p = self.params
        return f"simulated(p={p.p_accuracy},beta={p.length_bias},abstain={p.abstain_rate})"

    def vote(self, request: JudgeRequest) -> PositionalVote:
        rng = derive_rng(
            self.params.seed, "sim-judge", request.context,
            request.first.id, request.second.id,
        )
        if self.params.abstain_rate > 0.0 and rng.random() < self.params.abstain_rate:
            return PositionalVote(0, raw="abstain")
        first_valid = bool(self.truth.get(request.first.id, False))
        second_valid = bool(self.truth.get(request.second.id, False))
        better: bool | None
        if first_valid == second_valid:
            better = None
        else:
            better = first_valid
        p_first = simulated_preference_prob(
            better, request.first.rationale_len, request.second.rationale_len, self.params
        )
        position = 1 if rng.random() < p_first else 2
        return PositionalVote(position, raw=str(position))


# ---------------------------------------------------------------------------
# Deterministic stub judges
# ---------------------------------------------------------------------------


@dataclass
class FirstPresentedJudge:
    """Pure position bias: always prefers whichever rationale is shown first."""

    name: str = "stub-first-presented"

    def vote(self, request: JudgeRequest) -> PositionalVote:
        return PositionalVote(1, raw="1")


@dataclass
class LongerRationaleJudge:
    """Pure length bias: prefers the longer shown rationale, first on ties."""

    name: str = "stub-longer"

    def vote(self, request: JudgeRequest) -> PositionalVote:
        if request.second.rationale_len > request.first.rationale_len:
            return PositionalVote(2, raw="2")
        return PositionalVote(1, raw="1")


@dataclass
class FunctionJudge:
    """Adapter turning a plain function of the request into a judge."""

    fn: Callable[[JudgeRequest], PositionalVote]
    name: str = "function-judge"

    def vote(self, request: JudgeRequest) -> PositionalVote:
        return self.fn(request)


# ---------------------------------------------------------------------------
# Weighted-score single-answer evaluation
# ---------------------------------------------------------------------------

_SCORE_TOKENS = (1, 2, 3, 4, 5)
_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, slots=True)
class ScoreDistribution:
    """Probabilities of emitting the score tokens "1".."5"."""

    probs: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.probs) != 5:
            raise InvalidDistribution(f"need 5 probabilities, got {len(self.probs)}")
        if any(p < -_SUM_TOLERANCE or p > 1.0 + _SUM_TOLERANCE for p in self.probs):
            raise InvalidDistribution(f"probabilities outside [0,1]: {self.probs}")
        total = sum(self.probs)
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise InvalidDistribution(f"probabilities sum to {total}, not 1")


def geval_score(dist: ScoreDistribution) -> float:
    """Expected score token under the distribution; in [1, 5]."""
    return sum(p * t for p, t in zip(dist.probs, _SCORE_TOKENS))


Scorer = Callable[[Solution, int], ScoreDistribution]

_ATTEMPT_ERRORS = (JudgeUnavailable, InvalidDistribution, VerdictUnparsable)


def geval_select(candidates: Sequence[Solution], scorer: Scorer, num_samples: int) -> Solution:
    """Score every candidate ``num_samples`` times, return the best mean.

    Ties break to the smallest solution id. A candidate whose scorer fails
    on every attempt is excluded; if all candidates are excluded the judge
    is considered unavailable.
    """
    if not candidates:
        raise DomainError("geval_select needs at least one candidate")
    if num_samples < 1:
        raise DomainError("num_samples must be >= 1")
    means: dict[str, float] = {}
    for sol in candidates:
        scores = []
        for attempt in range(num_samples):
            try:
                scores.append(geval_score(scorer(sol, attempt)))
            except _ATTEMPT_ERRORS:
                continue
        if scores:
            means[sol.id] = sum(scores) / len(scores)
    if not means:
        raise JudgeUnavailable("scoring failed for every candidate")
    scored = [sol for sol in candidates if sol.id in means]
    return min(scored, key=lambda sol: (-means[sol.id], sol.id))


@dataclass
class SimulatedScorer:
    """Score-distribution generator whose expectation tracks ground truth.

    Draws a target score from a validity-dependent Gaussian and spreads mass
    over the two adjacent score tokens so that geval_score(dist) equals the
    target exactly.
    """

    truth: Mapping[str, bool]
    mean_valid: float = 3.8
    mean_invalid: float = 2.8
    sd: float = 0.6
    seed: int = 0

    def __call__(self, solution: Solution, attempt: int) -> ScoreDistribution:
        rng = derive_rng(self.seed, "sim-scorer", solution.id, attempt)
        mean = self.mean_valid if self.truth.get(solution.id, False) else self.mean_invalid
        target = min(5.0, max(1.0, rng.gauss(mean, self.sd)))
        lo = min(4, int(target))
        frac = target - lo
        probs = [0.0] * 5
        probs[lo - 1] = 1.0 - frac
        probs[lo] = frac
        return ScoreDistribution(tuple(probs))
