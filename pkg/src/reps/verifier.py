"""Verifier abstraction, answer selection, and the reference trainable scorer.

The reference scorer is a hashed n-gram logistic model over question and
rationale text plus a rationale-length bucket. It stands in for a fine-tuned
LLM verifier: same probability contract, same binary cross-entropy training
objective, CPU-only runtimes in seconds. Anything exposing ``score(question,
solution) -> VerifierScore`` plugs into selection and evaluation unchanged.
"""

from __future__ import annotations

import base64
import json
import math
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .domain import LabeledExample, Question, Solution, answers_match
from .errors import DegenerateData, DomainError, FeatureExtractionFailure
from .seeding import derive_rng

P_CLAMP = 1e-7

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True, slots=True)
class VerifierScore:
    solution_id: str
    probability: float

    def __post_init__(self):
        if not P_CLAMP <= self.probability <= 1.0 - P_CLAMP:
            raise DomainError(
                f"probability must lie in [{P_CLAMP}, 1-{P_CLAMP}], got {self.probability}"
            )


@runtime_checkable
class Verifier(Protocol):
    def score(self, question: Question, solution: Solution) -> VerifierScore: ...


def _clamp(p: float) -> float:
    return min(1.0 - P_CLAMP, max(P_CLAMP, p))


def score(verifier: Verifier, question: Question, solution: Solution) -> VerifierScore:
    """Probability that the solution is correct, per the given verifier."""
    return verifier.score(question, solution)


def select_answer(
    verifier: Verifier, question: Question, candidates: Sequence[Solution]
) -> Solution:
    """Highest-probability candidate; ties break to the smallest solution id."""
    if not candidates:
        raise DomainError("select_answer needs at least one candidate")
    probs = {
        sol.id: verifier.score(question, sol).probability for sol in candidates
    }
    return min(candidates, key=lambda sol: (-probs[sol.id], sol.id))


def bce_loss(probs: Sequence[float], labels: Sequence[int]) -> float:
    """Mean binary cross-entropy; requires probabilities strictly in (0,1)."""
    if len(probs) != len(labels) or not probs:
        raise DomainError("probs and labels must be equal-length and non-empty")
    total = 0.0
    for p, y in zip(probs, labels):
        if not 0.0 < p < 1.0:
            raise DomainError(f"probability {p} outside (0,1)")
        if y not in (0, 1):
            raise DomainError(f"label {y!r} not binary")
        total += y * math.log(p) + (1 - y) * math.log(1.0 - p)
    return -total / len(probs)


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True, slots=True)
class FeatureSpec:
    hash_bits: int = 18
    ngram_orders: tuple[int, ...] = (1, 2)
    length_bucket_chars: int = 64
    max_length_buckets: int = 32

    def to_dict(self) -> dict:
        return {
            "hash_bits": self.hash_bits,
            "ngram_orders": list(self.ngram_orders),
            "length_bucket_chars": self.length_bucket_chars,
            "max_length_buckets": self.max_length_buckets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            hash_bits=int(d["hash_bits"]),
            ngram_orders=tuple(d["ngram_orders"]),
            length_bucket_chars=int(d["length_bucket_chars"]),
            max_length_buckets=int(d["max_length_buckets"]),
        )


def feature_strings(question: Question, solution: Solution, spec: FeatureSpec) -> list[str]:
    """Word n-grams of question and rationale (namespaced) plus a
    rationale-length bucket."""
    if not solution.rationale:
        raise FeatureExtractionFailure(f"{solution.id}: empty rationale")
    out: list[str] = []
    for prefix, text in (("q", question.text), ("r", solution.rationale)):
        tokens = _TOKEN.findall(text.lower())
        for n in spec.ngram_orders:
            for i in range(len(tokens) - n + 1):
                out.append(prefix + ":" + " ".join(tokens[i : i + n]))
    bucket = min(
        solution.rationale_len // spec.length_bucket_chars,
        spec.max_length_buckets - 1,
    )
    out.append(f"len:{bucket}")
    return out


def hash_features(strings: Sequence[str], hash_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed hashing trick: (indices, values) with counts folded by sign.

    crc32 is used deliberately: stable across platforms and Python versions,
    unlike the salted builtin hash().
    """
    dim_mask = (1 << hash_bits) - 1
    acc: dict[int, float] = {}
    for s in strings:
        h = zlib.crc32(s.encode("utf-8"))
        idx = h & dim_mask
        sign = 1.0 if (h >> 31) & 1 == 0 else -1.0
        acc[idx] = acc.get(idx, 0.0) + sign
    indices = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
    values = np.fromiter(acc.values(), dtype=np.float64, count=len(acc))
    order = np.argsort(indices, kind="stable")
    return indices[order], values[order]


# ---------------------------------------------------------------------------
# Reference scorer
# ---------------------------------------------------------------------------


@dataclass
class ReferenceScorer:
    """Linear logistic scorer over hashed features."""

    weights: np.ndarray
    bias: float
    spec: FeatureSpec = field(default_factory=FeatureSpec)

    def __post_init__(self):
        expected = 1 << self.spec.hash_bits
        if self.weights.shape != (expected,):
            raise DomainError(
                f"weight vector must have length {expected}, got {self.weights.shape}"
            )

    @classmethod
    def zeros(cls, spec: FeatureSpec | None = None, bias: float = 0.0) -> "ReferenceScorer":
        spec = spec or FeatureSpec()
        return cls(np.zeros(1 << spec.hash_bits), float(bias), spec)

    def score_value(self, question: Question, solution: Solution) -> float:
        idx, val = hash_features(feature_strings(question, solution, self.spec), self.spec.hash_bits)
        z = float(self.weights[idx] @ val) + self.bias
        return _clamp(_sigmoid(z))

    def score(self, question: Question, solution: Solution) -> VerifierScore:
        return VerifierScore(solution.id, self.score_value(question, solution))

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_spec": self.spec.to_dict(),
            "bias": self.bias,
            "weights_b64": base64.b64encode(
                np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
            ).decode("ascii"),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceScorer":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise DomainError(f"unsupported model format version {version!r}")
        spec = FeatureSpec.from_dict(payload["feature_spec"])
        weights = np.frombuffer(
            base64.b64decode(payload["weights_b64"]), dtype="<f8"
        ).astype(np.float64)
        return cls(weights, float(payload["bias"]), spec)


def _sigmoid(x: float) -> float:
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


# ---------------------------------------------------------------------------
# Fixture verifiers (testing and CLI baselines)
# ---------------------------------------------------------------------------


@dataclass
class UniformRandomVerifier:
    """Seeded uniform score per (question, solution); position-independent."""

    seed: int = 0

    def score(self, question: Question, solution: Solution) -> VerifierScore:
        rng = derive_rng(self.seed, "uniform-verifier", question.id, solution.id)
        return VerifierScore(solution.id, _clamp(rng.random()))


@dataclass
class GroundTruthVerifier:
    """Scores ground-truth-valid solutions highest, then correct answers.

    Ground truth comes from the solution's ``gt_valid`` extra (synthetic
    pools) or an explicit map. A small seeded jitter separates same-band
    candidates deterministically.
    """

    truth: dict[str, bool] | None = None
    seed: int = 0

    def _is_valid(self, solution: Solution) -> bool:
        if self.truth is not None and solution.id in self.truth:
            return bool(self.truth[solution.id])
        return bool(solution.extras.get("gt_valid", False))

    def score(self, question: Question, solution: Solution) -> VerifierScore:
        if self._is_valid(solution):
            base = 0.9
        elif answers_match(solution.answer, question.gold_answer, question.task_kind):
            base = 0.5
        else:
            base = 0.1
        jitter = derive_rng(self.seed, "gt-verifier", question.id, solution.id).random()
        return VerifierScore(solution.id, _clamp(base + 0.05 * jitter))


@dataclass
class AnswerMatchVerifier:
    """Detects correct answers but is blind to rationale validity."""

    seed: int = 0

    def score(self, question: Question, solution: Solution) -> VerifierScore:
        base = 0.7 if answers_match(
            solution.answer, question.gold_answer, question.task_kind
        ) else 0.1
        jitter = derive_rng(self.seed, "am-verifier", question.id, solution.id).random()
        return VerifierScore(solution.id, _clamp(base + 0.05 * jitter))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TrainConfig:
    lr: float = 2.0
    epochs: int = 120
    l2: float = 1e-6
    seed: int = 0
    batch_size: int | None = None  # None = full batch (deterministic default)
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.l2 < 0:
            raise DomainError("invalid training hyperparameters")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "l2": self.l2,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "feature_spec": self.feature_spec.to_dict(),
        }


@dataclass
class _Design:
    """Sparse design matrix in COO-by-row layout."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    y: np.ndarray
    n: int
    dim: int

    def logits(self, weights: np.ndarray, bias: float) -> np.ndarray:
        z = np.bincount(self.rows, weights=weights[self.cols] * self.vals, minlength=self.n)
        return z + bias

    def grad_w(self, residual: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.cols, weights=residual[self.rows] * self.vals, minlength=self.dim
        )


def build_design(
    examples: Sequence[LabeledExample],
    corpus_by_id: dict[str, Question],
    spec: FeatureSpec,
) -> _Design:
    rows, cols, vals, y = [], [], [], []
    for i, ex in enumerate(examples):
        question = corpus_by_id.get(ex.solution.question_id)
        if question is None:
            raise DomainError(f"{ex.solution.id}: unknown question {ex.solution.question_id}")
        idx, val = hash_features(feature_strings(question, ex.solution, spec), spec.hash_bits)
        rows.append(np.full(len(idx), i, dtype=np.int64))
        cols.append(idx)
        vals.append(val)
        y.append(ex.label)
    return _Design(
        rows=np.concatenate(rows),
        cols=np.concatenate(cols),
        vals=np.concatenate(vals),
        y=np.asarray(y, dtype=np.float64),
        n=len(examples),
        dim=1 << spec.hash_bits,
    )


def _objective(design: _Design, weights: np.ndarray, bias: float, l2: float) -> float:
    z = design.logits(weights, bias)
    p = np.clip(1.0 / (1.0 + np.exp(-z)), P_CLAMP, 1.0 - P_CLAMP)
    bce = -float(np.mean(design.y * np.log(p) + (1.0 - design.y) * np.log(1.0 - p)))
    return bce + l2 * float(weights @ weights)


@dataclass
class TrainResult:
    scorer: ReferenceScorer
    losses: list[float]


def train_reference_scorer(
    train: Sequence[LabeledExample],
    corpus: Sequence[Question],
    config: TrainConfig | None = None,
) -> TrainResult:
    """Gradient-descent fit of the reference scorer on BCE + l2 * ||w||^2.

    Full-batch mode (the default) backtracks the step size whenever a step
    would increase the objective, so the recorded loss curve is
    non-increasing. Mini-batch mode (batch_size set) shuffles with the run
    seed and offers no such guarantee.
    """
    config = config or TrainConfig()
    labels = {ex.label for ex in train}
    if labels != {0, 1}:
        raise DegenerateData(f"training data must contain both classes, got labels {labels}")
    corpus_by_id = {q.id: q for q in corpus}
    design = build_design(train, corpus_by_id, config.feature_spec)
    weights = np.zeros(design.dim)
    bias = 0.0
    losses = [_objective(design, weights, bias, config.l2)]

    if config.batch_size is None:
        for _ in range(config.epochs):
            z = design.logits(weights, bias)
            p = np.clip(1.0 / (1.0 + np.exp(-z)), P_CLAMP, 1.0 - P_CLAMP)
            residual = (p - design.y) / design.n
            grad_w = design.grad_w(residual) + 2.0 * config.l2 * weights
            grad_b = float(np.sum(residual))
            step = config.lr
            while True:
                new_w = weights - step * grad_w
                new_b = bias - step * grad_b
                new_loss = _objective(design, new_w, new_b, config.l2)
                if new_loss <= losses[-1] + 1e-12 or step < 1e-12:
                    break
                step *= 0.5
            weights, bias = new_w, new_b
            losses.append(new_loss)
    else:
        order = np.arange(design.n)
        # pre-index nonzeros by example for mini-batch slicing
        sort_idx = np.argsort(design.rows, kind="stable")
        sorted_rows = design.rows[sort_idx]
        starts = np.searchsorted(sorted_rows, np.arange(design.n))
        ends = np.searchsorted(sorted_rows, np.arange(design.n), side="right")
        for epoch in range(config.epochs):
            derive_rng(config.seed, "shuffle", epoch).shuffle(order)
            for lo in range(0, design.n, config.batch_size):
                batch = order[lo : lo + config.batch_size]
                take = np.concatenate([sort_idx[starts[i]:ends[i]] for i in batch])
                if take.size == 0:
                    continue
                remap = {int(i): k for k, i in enumerate(batch)}
                rows = np.asarray([remap[int(r)] for r in design.rows[take]], dtype=np.int64)
                cols = design.cols[take]
                vals = design.vals[take]
                yb = design.y[batch]
                z = np.bincount(rows, weights=weights[cols] * vals, minlength=len(batch)) + bias
                p = np.clip(1.0 / (1.0 + np.exp(-z)), P_CLAMP, 1.0 - P_CLAMP)
                residual = (p - yb) / len(batch)
                grad_w = np.bincount(cols, weights=residual[rows] * vals, minlength=design.dim)
                grad_w += 2.0 * config.l2 * weights
                weights = weights - config.lr * grad_w
                bias = bias - config.lr * float(np.sum(residual))
            losses.append(_objective(design, weights, bias, config.l2))

    return TrainResult(ReferenceScorer(weights, float(bias), config.feature_spec), losses)
