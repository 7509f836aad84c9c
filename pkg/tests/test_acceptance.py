"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. Heavy fixtures (the
synthetic benchmark and its controlled test set) are session-scoped and
shared across criteria.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from reps.cli import main as cli_main
from reps.datasets import (
    SimulatedValidityOracle,
    build_baseline,
    build_controlled_test,
    build_high_quality,
)
from reps.domain import (
    ControlledTestItem,
    LabeledExample,
    Question,
    Solution,
    Strategy,
    TaskKind,
)
from reps.experiments import (
    bias_amplification_sweep,
    mixing_curve,
    regime_comparison,
    survival_grid,
)
from reps.judges import (
    FirstPresentedJudge,
    FunctionJudge,
    PositionalVote,
    Presentation,
    ScoreDistribution,
    SimJudgeParams,
    SimulatedJudge,
    Winner,
    geval_score,
    pairwise_judge,
)
from reps.metrics import evaluate_controlled
from reps.seeding import derive_numpy_rng, derive_rng
from reps.synth import SynthConfig, controlled_test_config, generate_benchmark
from reps.tournament import TournamentConfig, run_tournament
from reps.verifier import (
    TrainConfig,
    UniformRandomVerifier,
    VerifierScore,
    bce_loss,
    build_design,
    select_answer,
)


def report(criterion, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"\n[acceptance] criterion {criterion}: {status} - {detail}")
    return passed


@pytest.fixture(scope="session")
def benchmark():
    """>= 800 train questions with the planted rho_v=0.9 / rho_i=0.2 signal,
    plus a 500-question controlled test set from a held-out split."""
    train = generate_benchmark(SynthConfig(
        n_questions=800, marker_rate_valid=0.9, marker_rate_invalid=0.2,
        seed=1001, id_prefix="tr",
    ))
    eval_ = generate_benchmark(SynthConfig(
        n_questions=500, marker_rate_valid=0.9, marker_rate_invalid=0.2,
        seed=1002, id_prefix="ev",
    ))
    oracle = SimulatedValidityOracle()
    items = build_controlled_test(eval_.questions, eval_.pool, oracle, seed=1003).items
    return {"train": train, "oracle": oracle, "items": items}


def test_criterion_1_chance_rates():
    start = time.perf_counter()
    bundle = generate_benchmark(controlled_test_config(5000, seed=2024, id_prefix="cr"))
    items = build_controlled_test(
        bundle.questions, bundle.pool, SimulatedValidityOracle(), seed=2025
    ).items
    result = evaluate_controlled(UniformRandomVerifier(seed=2026), items)
    elapsed = time.perf_counter() - start
    ok = (
        0.185 <= result.rationale_accuracy <= 0.215
        and 0.58 <= result.answer_accuracy <= 0.62
        and elapsed < 10.0
    )
    assert report(
        1, ok,
        f"uniform scorer over {result.n_items} items: RA={result.rationale_accuracy:.4f} "
        f"(target 0.20+/-0.015), AA={result.answer_accuracy:.4f} (target 0.60+/-0.02), "
        f"runtime {elapsed:.1f}s < 10s",
    )


def test_criterion_2_tournament_oracle_equivalence():
    start = time.perf_counter()
    cells = survival_grid(
        ns=(4, 8, 16), ss=(3, 5), ps=(0.5, 0.6, 0.7, 0.9), trials=20000, seed=2027
    )
    elapsed = time.perf_counter() - start
    errors = {
        (c.n_candidates, c.votes, c.p_accuracy): abs(c.valid_win_rate - c.analytic)
        for c in cells
    }
    spot = next(
        c for c in cells if (c.n_candidates, c.votes, c.p_accuracy) == (8, 5, 0.7)
    )
    ok = (
        all(err < 0.01 for err in errors.values())
        and abs(spot.valid_win_rate - 0.586) <= 0.01
        and elapsed < 60.0
    )
    assert report(
        2, ok,
        f"24 cells x 20000 trials: max |MC - q^log2N| = {max(errors.values()):.5f} < 0.01, "
        f"spot (8,5,0.7) = {spot.valid_win_rate:.4f} (0.586+/-0.01), runtime {elapsed:.1f}s < 60s",
    )


def test_criterion_3_geval_exactness():
    rng = derive_numpy_rng(31, "geval-acceptance")
    max_err = 0.0
    for _ in range(1000):
        raw = rng.random(5) + 1e-9
        probs = tuple(float(p) for p in raw / raw.sum())
        expected = sum(p * t for p, t in zip(probs, (1, 2, 3, 4, 5)))
        max_err = max(max_err, abs(geval_score(ScoreDistribution(probs)) - expected))
    tagged = (
        abs(geval_score(ScoreDistribution((0.2,) * 5)) - 3.0) < 1e-12
        and abs(geval_score(ScoreDistribution((0, 0, 0, 0, 1.0))) - 5.0) < 1e-12
        and abs(geval_score(ScoreDistribution((0.5, 0, 0, 0, 0.5))) - 3.0) < 1e-12
    )
    ok = max_err < 1e-12 and tagged
    assert report(
        3, ok,
        f"weighted-sum max error over 1000 random distributions = {max_err:.2e} < 1e-12; "
        f"tagged examples (uniform->3, point-mass->5, symmetric->3) exact",
    )


def test_criterion_4_bce_correctness_and_gradient():
    value_errs = [
        abs(bce_loss([0.5, 0.5], [1, 0]) - math.log(2)),
        abs(bce_loss([0.9], [1]) - (-math.log(0.9))),
        abs(bce_loss([0.9], [0]) - (-math.log(0.1))),
    ]
    # gradient check on a small hashed design, 100 random parameter points
    corpus = [Question(id="g", task_kind=TaskKind.YES_NO, text="t?", gold_answer="yes")]
    rng = derive_rng(17, "grad-data")
    examples = []
    for i in range(24):
        words = " ".join(f"w{rng.randrange(30)}" for _ in range(8))
        sol = Solution(
            id=f"g{i}", question_id="g",
            rationale=words + ". So the answer is yes.", answer="yes",
        )
        examples.append(LabeledExample(sol, i % 2, Strategy.BASELINE))
    from reps.verifier import FeatureSpec

    design = build_design(examples, {"g": corpus[0]}, FeatureSpec(hash_bits=8))
    nprng = np.random.default_rng(18)
    h = 1e-5
    active = np.unique(design.cols)
    worst_rel = 0.0
    for _ in range(100):
        w = nprng.normal(0, 0.5, design.dim)
        b = float(nprng.normal(0, 0.5))
        p = 1.0 / (1.0 + np.exp(-design.logits(w, b)))
        grad = design.grad_w((p - design.y) / design.n)
        coord = int(nprng.choice(active))

        def loss_at(weights):
            pp = 1.0 / (1.0 + np.exp(-design.logits(weights, b)))
            return -float(np.mean(design.y * np.log(pp) + (1 - design.y) * np.log(1 - pp)))

        w_hi, w_lo = w.copy(), w.copy()
        w_hi[coord] += h
        w_lo[coord] -= h
        numeric = (loss_at(w_hi) - loss_at(w_lo)) / (2 * h)
        rel = abs(grad[coord] - numeric) / max(abs(numeric), abs(grad[coord]), 1e-8)
        worst_rel = max(worst_rel, rel)
    ok = max(value_errs) < 1e-9 and worst_rel < 1e-4
    assert report(
        4, ok,
        f"BCE hand values (ln2, -ln0.9, -ln0.1) max err = {max(value_errs):.2e} < 1e-9; "
        f"analytic vs central-difference gradient worst rel err = {worst_rel:.2e} < 1e-4",
    )


def test_criterion_5_regime_study(benchmark):
    start = time.perf_counter()
    train = benchmark["train"]
    judge = SimulatedJudge(SimJudgeParams(p_accuracy=0.9, seed=1004), train.validity)
    rows = regime_comparison(
        train.questions, train.pool, benchmark["oracle"], judge, benchmark["items"],
        tournament_config=TournamentConfig(seed=1004),
        train_config=TrainConfig(lr=2.0, epochs=120, seed=1004),
        seed=1004,
    )
    elapsed = time.perf_counter() - start
    ra = {row.regime: row.rationale_accuracy for row in rows}
    ok = (
        ra["high_quality"] > ra["baseline"] > ra["low_quality"]
        and abs(ra["low_quality"] - 0.20) <= 0.05
        and ra["reps"] >= ra["baseline"] + 0.05
        and elapsed < 300.0
    )
    assert report(
        5, ok,
        f"RA: low={ra['low_quality']:.3f} (chance+/-0.05), baseline={ra['baseline']:.3f}, "
        f"high={ra['high_quality']:.3f}, reps={ra['reps']:.3f} "
        f"(>= baseline+0.05); runtime {elapsed:.0f}s < 300s",
    )


def test_criterion_6_mixing_curve(benchmark):
    train = benchmark["train"]
    baseline = build_baseline(train.pool, train.questions).examples
    high = build_high_quality(train.pool, train.questions, benchmark["oracle"]).examples
    rows = mixing_curve(
        baseline, high, train.questions, benchmark["items"],
        train_config=TrainConfig(lr=2.0, epochs=120, seed=1005), seed=1005,
    )
    ras = [row.rationale_accuracy for row in rows]
    aas = [row.answer_accuracy for row in rows]
    rho = float(spearmanr(range(len(ras)), ras).statistic)
    aa_range = max(aas) - min(aas)
    ok = rho > 0.8 and aa_range < 0.05 and len(rows) == 11
    assert report(
        6, ok,
        f"RA over 11 ratios: {ras[0]:.3f} -> {ras[-1]:.3f}, Spearman rho = {rho:.3f} > 0.8; "
        f"AA range = {aa_range:.4f} < 0.05",
    )


def test_criterion_7_bias_amplification():
    ns = (4, 8, 16, 32, 64)
    biased = bias_amplification_sweep(
        ns=ns, ss=(5,), p_accuracy=0.95, length_bias=1.5, trials=20000, seed=2028,
        valid_length=120.0, invalid_length=600.0, length_sd=30.0,
    )
    control = bias_amplification_sweep(
        ns=ns, ss=(5,), p_accuracy=0.95, length_bias=0.0, trials=20000, seed=2028,
        valid_length=120.0, invalid_length=600.0, length_sd=30.0,
    )
    lens_b = [cell.mean_winner_length for cell in biased]
    lens_0 = [cell.mean_winner_length for cell in control]
    win_gap = biased[0].valid_win_rate - biased[-1].valid_win_rate
    monotone = all(b >= a for a, b in zip(lens_b, lens_b[1:]))
    # beta=0 tolerance (3 chars) covers the small survival-induced drift;
    # the biased trend is an order of magnitude larger
    flat = (max(lens_0) - min(lens_0)) <= 3.0
    ok = monotone and win_gap >= 0.05 and flat
    assert report(
        7, ok,
        f"beta=1.5: winner length {lens_b[0]:.1f} -> {lens_b[-1]:.1f} non-decreasing in N; "
        f"valid win rate drop N=4->64 = {win_gap:.4f} >= 0.05; "
        f"beta=0 length range = {max(lens_0) - min(lens_0):.2f} <= 3.0 (flat)",
    )


def test_criterion_8_byte_identical_reruns(tmp_path):
    synth_dir = tmp_path / "synth"
    assert cli_main([
        "synth", "--questions", "40", "--seed", "77", "--out", str(synth_dir),
    ]) == 0
    reps_args = [
        "reps-select", "--corpus", str(synth_dir / "corpus.jsonl"),
        "--pool", str(synth_dir / "pool.jsonl"), "--judge", "simulated",
        "--p-accuracy", "0.8", "--seed", "78",
    ]
    sim_args = [
        "simulate", "--sweep", "--trials", "4000", "--sim-ns", "4,8",
        "--sim-ss", "3,5", "--sim-ps", "0.6,0.9", "--seed", "79",
    ]
    pairs = []
    for name, args in (("reps-select", reps_args), ("simulate", sim_args)):
        out1, out2 = tmp_path / f"{name}-1", tmp_path / f"{name}-2"
        assert cli_main(args + ["--out", str(out1)]) == 0
        assert cli_main(args + ["--out", str(out2)]) == 0
        files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
        identical = files1 == files2 and all(
            (out1 / rel).read_bytes() == (out2 / rel).read_bytes() for rel in files1
        )
        pairs.append((name, len(files1), identical))
    ok = all(identical for _, _, identical in pairs)
    assert report(
        8, ok,
        "; ".join(
            f"{name}: {n} artifacts byte-identical={identical}"
            for name, n, identical in pairs
        ),
    )


def test_criterion_9_property_suites():
    checks = {}

    # presentation invariance of the verdict mapping (positional stub)
    q = Question(id="p", task_kind=TaskKind.YES_NO, text="?", gold_answer="yes")
    a = Solution(id="a", question_id="p", rationale="one two", answer="yes")
    b = Solution(id="b", question_id="p", rationale="three four five", answer="yes")
    stub_ab = pairwise_judge(FirstPresentedJudge(), q, "yes", a, b, Presentation.AB).winner
    stub_ba = pairwise_judge(FirstPresentedJudge(), q, "yes", a, b, Presentation.BA).winner
    content = FunctionJudge(
        lambda req: PositionalVote(1 if req.first.rationale > req.second.rationale else 2)
    )
    content_ab = pairwise_judge(content, q, "yes", a, b, Presentation.AB).winner
    content_ba = pairwise_judge(content, q, "yes", a, b, Presentation.BA).winner
    checks["presentation-invariance"] = (
        (stub_ab, stub_ba) == (Winner.FIRST, Winner.SECOND) and content_ab == content_ba
    )

    # RA <= AA structural invariant across random verifiers
    bundle = generate_benchmark(controlled_test_config(120, seed=91, id_prefix="pr"))
    items = build_controlled_test(
        bundle.questions, bundle.pool, SimulatedValidityOracle(), seed=92
    ).items
    checks["ra-le-aa"] = all(
        (r := evaluate_controlled(UniformRandomVerifier(seed=k), items)).rationale_accuracy
        <= r.answer_accuracy
        for k in range(10)
    )

    # argmax invariance under a strictly increasing transform
    class Fixed:
        def __init__(self, table, transform=lambda x: x):
            self.table, self.transform = table, transform

        def score(self, question, solution):
            return VerifierScore(solution.id, self.transform(self.table[solution.id]))

    table = {"a": 0.31, "b": 0.62, "c": 0.44}
    cands = [
        Solution(id=k, question_id="p", rationale="r text", answer="yes") for k in table
    ]
    checks["argmax-invariance"] = (
        select_answer(Fixed(table), q, cands).id
        == select_answer(Fixed(table, lambda x: x**3), q, cands).id
        == select_answer(Fixed(table, lambda x: 0.5 * x + 0.1), q, cands).id
    )

    # round/match-count identities for power-of-two brackets
    shape_ok = True
    for n in (2, 4, 8, 16):
        cands_n = [
            Solution(id=f"s{i:02d}", question_id="p", rationale=f"r{i} words", answer="yes")
            for i in range(n)
        ]
        judge = SimulatedJudge(SimJudgeParams(p_accuracy=0.7, seed=n), {})
        _, trace = run_tournament(q, cands_n, judge, TournamentConfig(seed=n))
        shape_ok &= len(trace.rounds) == int(math.log2(n))
        shape_ok &= sum(len(rnd) for rnd in trace.rounds) == n - 1
        shape_ok &= trace.byes == ()
    checks["bracket-identities"] = shape_ok

    # serialization round-trips
    question = Question(
        id="s1", task_kind=TaskKind.MULTIPLE_CHOICE, text="which?", gold_answer="A",
        options=(("A", "x"), ("B", "y")), supporting_facts=("f",), extras={"k": 1},
    )
    sol = Solution(
        id="s", question_id="s1", rationale="so the answer is A", answer="A",
        gen_temperature=0.7, extras={"gt_valid": True},
    )
    ex = LabeledExample(sol, 1, Strategy.REPS)
    item_bundle = generate_benchmark(controlled_test_config(1, seed=93, id_prefix="rt"))
    item = build_controlled_test(
        item_bundle.questions, item_bundle.pool, SimulatedValidityOracle(), seed=94
    ).items[0]
    _, trace = run_tournament(
        q,
        [Solution(id=f"t{i}", question_id="p", rationale=f"r{i} text", answer="yes")
         for i in range(4)],
        SimulatedJudge(SimJudgeParams(p_accuracy=0.6, seed=5), {}),
        TournamentConfig(seed=5),
    )
    from reps.tournament import TournamentTrace

    checks["round-trips"] = (
        Question.from_dict(question.to_dict()) == question
        and Solution.from_dict(sol.to_dict()) == sol
        and LabeledExample.from_dict(ex.to_dict()) == ex
        and ControlledTestItem.from_dict(item.to_dict()) == item
        and TournamentTrace.from_dict(trace.to_dict()) == trace
    )

    ok = all(checks.values())
    assert report(
        9, ok,
        ", ".join(f"{name}={'ok' if passed else 'FAIL'}" for name, passed in checks.items()),
    )
