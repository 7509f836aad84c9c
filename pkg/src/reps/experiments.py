"""Desk-scale studies: analytic tournament oracles, Monte Carlo sweeps,
regime comparisons, and the mixing curve.

The analytic oracle gives the probability that the unique valid candidate
survives a power-of-two bracket when each of its matches is decided by an
independent S-vote majority with per-vote accuracy p. Monte Carlo paths run
the simulation kernel (which also handles byes for non-power-of-two N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import simkernel
from .datasets import (
    ValidityOracle,
    build_baseline,
    build_high_quality,
    build_low_quality,
    match_positive_counts,
    mix_datasets,
)
from .domain import ControlledTestItem, LabeledExample, Question, Solution
from .errors import DomainError
from .judges import PairwiseJudge
from .metrics import evaluate_controlled
from .seeding import derive_numpy_rng, derive_rng
from .tournament import TournamentConfig, build_reps_dataset
from .verifier import TrainConfig, train_reference_scorer

DEFAULT_CHUNK_TRIALS = 8192


def majority_vote_prob(p: float, votes: int) -> float:
    """P(majority of `votes` independent Bernoulli(p) votes succeeds)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0,1], got {p}")
    if votes < 1 or votes % 2 == 0:
        raise DomainError(f"votes must be odd and >= 1, got {votes}")
    need = (votes + 1) // 2
    return sum(
        math.comb(votes, k) * p**k * (1.0 - p) ** (votes - k)
        for k in range(need, votes + 1)
    )


def survival_probability(n_candidates: int, votes: int, p: float) -> float:
    """Analytic valid-candidate survival for power-of-two brackets:
    majority-vote win probability raised to the number of rounds."""
    if n_candidates < 1 or (n_candidates & (n_candidates - 1)) != 0:
        raise DomainError(
            f"analytic oracle needs a power-of-two candidate count, got {n_candidates}"
            " (the Monte Carlo path handles byes instead)"
        )
    rounds = n_candidates.bit_length() - 1
    return majority_vote_prob(p, votes) ** rounds


@dataclass
class SimCellResult:
    n_candidates: int
    votes: int
    p_accuracy: float
    length_bias: float
    trials: int
    valid_win_rate: float
    valid_win_se: float
    mean_winner_length: float
    winner_length_se: float
    analytic: float | None = None

    def to_row(self) -> dict:
        return {
            "n": self.n_candidates,
            "s": self.votes,
            "p": self.p_accuracy,
            "beta": self.length_bias,
            "trials": self.trials,
            "valid_win_rate": self.valid_win_rate,
            "valid_win_se": self.valid_win_se,
            "mean_winner_length": self.mean_winner_length,
            "winner_length_se": self.winner_length_se,
            "analytic": self.analytic,
            "abs_err": (
                abs(self.valid_win_rate - self.analytic)
                if self.analytic is not None
                else None
            ),
        }


def simulate_cell(
    n_candidates: int,
    votes: int,
    p_accuracy: float,
    trials: int,
    seed: int = 0,
    length_bias: float = 0.0,
    valid_length: float = 300.0,
    invalid_length: float = 300.0,
    length_sd: float = 0.0,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
    backend: str | None = None,
) -> SimCellResult:
    """Monte Carlo survival of the unique valid candidate among N.

    Lengths sit in column 0 (valid) vs the rest (invalid); with
    length_sd == 0 the lengths are constants and no length draws are made.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = derive_numpy_rng(
        seed, "sim-cell", n_candidates, votes, p_accuracy, length_bias,
        valid_length, invalid_length, length_sd,
    )
    draws = simkernel.draw_count(n_candidates, votes)
    wins = 0
    length_sum = 0.0
    length_sq_sum = 0.0
    done = 0
    while done < trials:
        c = min(chunk_trials, trials - done)
        lengths = np.empty((c, n_candidates))
        if length_sd > 0.0:
            lengths[:, 0] = rng.normal(valid_length, length_sd, c)
            lengths[:, 1:] = rng.normal(invalid_length, length_sd, (c, n_candidates - 1))
            np.maximum(lengths, 1.0, out=lengths)
        else:
            lengths[:, 0] = valid_length
            lengths[:, 1:] = invalid_length
        uniforms = rng.random((c, draws))
        won, winner_len = simkernel.simulate_batch(
            votes, p_accuracy, length_bias, lengths, uniforms, backend=backend
        )
        wins += int(won.sum())
        length_sum += float(winner_len.sum())
        length_sq_sum += float((winner_len**2).sum())
        done += c
    rate = wins / trials
    mean_len = length_sum / trials
    var_len = max(0.0, length_sq_sum / trials - mean_len**2)
    analytic = None
    if length_bias == 0.0 and (n_candidates & (n_candidates - 1)) == 0:
        analytic = survival_probability(n_candidates, votes, p_accuracy)
    return SimCellResult(
        n_candidates=n_candidates,
        votes=votes,
        p_accuracy=p_accuracy,
        length_bias=length_bias,
        trials=trials,
        valid_win_rate=rate,
        valid_win_se=math.sqrt(rate * (1.0 - rate) / trials),
        mean_winner_length=mean_len,
        winner_length_se=math.sqrt(var_len / trials),
        analytic=analytic,
    )


DEFAULT_SURVIVAL_GRID = {
    "n": (4, 8, 16),
    "s": (3, 5),
    "p": (0.5, 0.6, 0.7, 0.9),
}


def survival_grid(
    ns: Sequence[int] = DEFAULT_SURVIVAL_GRID["n"],
    ss: Sequence[int] = DEFAULT_SURVIVAL_GRID["s"],
    ps: Sequence[float] = DEFAULT_SURVIVAL_GRID["p"],
    trials: int = 20000,
    seed: int = 0,
    backend: str | None = None,
) -> list[SimCellResult]:
    """Monte Carlo vs analytic oracle over the (N, S, p) grid at beta = 0."""
    return [
        simulate_cell(n, s, p, trials, seed=seed, backend=backend)
        for n in ns
        for s in ss
        for p in ps
    ]


DEFAULT_BIAS_GRID = {"n": (4, 8, 16, 32, 64), "s": (3, 5, 9, 20)}


def bias_amplification_sweep(
    ns: Sequence[int] = DEFAULT_BIAS_GRID["n"],
    ss: Sequence[int] = DEFAULT_BIAS_GRID["s"],
    p_accuracy: float = 0.95,
    length_bias: float = 1.5,
    trials: int = 20000,
    seed: int = 0,
    valid_length: float = 120.0,
    invalid_length: float = 600.0,
    length_sd: float = 30.0,
    backend: str | None = None,
) -> list[SimCellResult]:
    """Winner length and valid-candidate survival across the (N, S) grid
    with a planted long-invalid confound."""
    results = []
    for n in ns:
        for s in ss:
            if s % 2 == 0:
                s += 1  # grid values must be odd; bump even entries
            results.append(
                simulate_cell(
                    n, s, p_accuracy, trials, seed=seed,
                    length_bias=length_bias, valid_length=valid_length,
                    invalid_length=invalid_length, length_sd=length_sd,
                    backend=backend,
                )
            )
    return results


# ---------------------------------------------------------------------------
# Regime comparison and mixing curve
# ---------------------------------------------------------------------------


@dataclass
class RegimeRow:
    regime: str
    rationale_accuracy: float
    answer_accuracy: float
    n_positives: int
    n_negatives: int

    def to_row(self) -> dict:
        return {
            "regime": self.regime,
            "rationale_accuracy": self.rationale_accuracy,
            "answer_accuracy": self.answer_accuracy,
            "n_positives": self.n_positives,
            "n_negatives": self.n_negatives,
        }


def _train_and_eval(
    name: str,
    examples: list[LabeledExample],
    corpus: Sequence[Question],
    eval_items: Sequence[ControlledTestItem],
    train_config: TrainConfig,
) -> RegimeRow:
    result = train_reference_scorer(examples, corpus, train_config)
    report = evaluate_controlled(result.scorer, eval_items)
    return RegimeRow(
        regime=name,
        rationale_accuracy=report.rationale_accuracy,
        answer_accuracy=report.answer_accuracy,
        n_positives=sum(1 for ex in examples if ex.label == 1),
        n_negatives=sum(1 for ex in examples if ex.label == 0),
    )


def build_regime_datasets(
    corpus: Sequence[Question],
    pool: Sequence[Solution],
    oracle: ValidityOracle,
    judge: PairwiseJudge,
    tournament_config: TournamentConfig,
    seed: int = 0,
    match_sizes: bool = True,
) -> dict[str, list[LabeledExample]]:
    """All four regimes over one pool, optionally positive-size matched."""
    datasets = {
        "low_quality": build_low_quality(pool, corpus, seed=seed).examples,
        "baseline": build_baseline(pool, corpus).examples,
        "high_quality": build_high_quality(pool, corpus, oracle).examples,
        "reps": build_reps_dataset(corpus, pool, judge, tournament_config).examples,
    }
    if match_sizes:
        datasets = match_positive_counts(datasets, seed=seed)
    return datasets


def regime_comparison(
    corpus: Sequence[Question],
    pool: Sequence[Solution],
    oracle: ValidityOracle,
    judge: PairwiseJudge,
    eval_items: Sequence[ControlledTestItem],
    tournament_config: TournamentConfig | None = None,
    train_config: TrainConfig | None = None,
    seed: int = 0,
) -> list[RegimeRow]:
    """Train one verifier per regime on size-matched datasets and evaluate
    all of them on the shared controlled test set."""
    tournament_config = tournament_config or TournamentConfig(seed=seed)
    train_config = train_config or TrainConfig(seed=seed)
    datasets = build_regime_datasets(
        corpus, pool, oracle, judge, tournament_config, seed=seed, match_sizes=True
    )
    return [
        _train_and_eval(name, datasets[name], corpus, eval_items, train_config)
        for name in ("low_quality", "baseline", "high_quality", "reps")
    ]


@dataclass
class MixRow:
    ratio: float
    rationale_accuracy: float
    answer_accuracy: float

    def to_row(self) -> dict:
        return {
            "ratio": self.ratio,
            "rationale_accuracy": self.rationale_accuracy,
            "answer_accuracy": self.answer_accuracy,
        }


DEFAULT_MIX_RATIOS = tuple(round(0.1 * i, 1) for i in range(11))


def one_positive_per_question(
    examples: Sequence[LabeledExample], seed: int = 0
) -> list[LabeledExample]:
    """Thin a dataset to one seeded positive per question (negatives kept).

    The mixing curve swaps positives question-by-question, so its baseline
    input needs exactly one positive slot per question.
    """
    by_question: dict[str, list[LabeledExample]] = {}
    for ex in examples:
        if ex.label == 1:
            by_question.setdefault(ex.solution.question_id, []).append(ex)
    keep: set[str] = set()
    for qid, positives in by_question.items():
        chosen = derive_rng(seed, "one-positive", qid).choice(positives)
        keep.add(chosen.solution.id)
    return [ex for ex in examples if ex.label == 0 or ex.solution.id in keep]


def mixing_curve(
    baseline_ds: Sequence[LabeledExample],
    high_ds: Sequence[LabeledExample],
    corpus: Sequence[Question],
    eval_items: Sequence[ControlledTestItem],
    ratios: Sequence[float] = DEFAULT_MIX_RATIOS,
    train_config: TrainConfig | None = None,
    seed: int = 0,
) -> list[MixRow]:
    """RA/AA as baseline positives are progressively replaced by
    high-quality positives for the same questions."""
    train_config = train_config or TrainConfig(seed=seed)
    baseline_one = one_positive_per_question(baseline_ds, seed=seed)
    rows = []
    for ratio in ratios:
        mixed = mix_datasets(baseline_one, list(high_ds), ratio, seed=seed)
        result = train_reference_scorer(mixed, corpus, train_config)
        report = evaluate_controlled(result.scorer, eval_items)
        rows.append(
            MixRow(
                ratio=float(ratio),
                rationale_accuracy=report.rationale_accuracy,
                answer_accuracy=report.answer_accuracy,
            )
        )
    return rows
