import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reps.domain import LabeledExample, Question, Solution, Strategy, TaskKind
from reps.errors import DegenerateData, DomainError, FeatureExtractionFailure
from reps.seeding import derive_rng
from reps.verifier import (
    FeatureSpec,
    GroundTruthVerifier,
    ReferenceScorer,
    TrainConfig,
    UniformRandomVerifier,
    VerifierScore,
    bce_loss,
    build_design,
    feature_strings,
    hash_features,
    select_answer,
    train_reference_scorer,
)


def q(qid="q1"):
    return Question(id=qid, task_kind=TaskKind.YES_NO, text="Will it work?", gold_answer="yes")


def s(sid, rationale="Testing things. So the answer is yes.", answer="yes", qid="q1"):
    return Solution(id=sid, question_id=qid, rationale=rationale, answer=answer)


class TestBCE:
    def test_half_probs_give_ln2(self):
        assert bce_loss([0.5, 0.5, 0.5], [1, 0, 1]) == pytest.approx(math.log(2), abs=1e-9)

    def test_hand_values(self):
        assert bce_loss([0.9], [1]) == pytest.approx(0.10536051565782628, abs=1e-9)
        assert bce_loss([0.9], [0]) == pytest.approx(2.3025850929940455, abs=1e-9)

    def test_boundary_probability_rejected(self):
        with pytest.raises(DomainError):
            bce_loss([1.0], [1])
        with pytest.raises(DomainError):
            bce_loss([0.0], [0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(DomainError):
            bce_loss([0.5], [1, 0])

    def test_nonnegative(self):
        rng = derive_rng(0, "bce")
        probs = [min(1 - 1e-7, max(1e-7, rng.random())) for _ in range(50)]
        labels = [rng.randint(0, 1) for _ in range(50)]
        assert bce_loss(probs, labels) >= 0.0


class TestFeatures:
    def test_empty_rationale_fails(self):
        bare = Solution(
            id="s", question_id="q1", rationale="", answer="yes",
            source="synthetic",
        )
        with pytest.raises(FeatureExtractionFailure):
            feature_strings(q(), bare, FeatureSpec())

    def test_namespaced_ngrams_and_length_bucket(self):
        strings = feature_strings(q(), s("s1", rationale="alpha beta"), FeatureSpec())
        assert "r:alpha" in strings
        assert "r:alpha beta" in strings
        assert "q:will it" in strings
        assert any(f.startswith("len:") for f in strings)

    def test_hash_features_deterministic_and_bounded(self):
        strings = ["r:alpha", "q:will", "r:alpha"]  # duplicate accumulates
        idx1, val1 = hash_features(strings, 10)
        idx2, val2 = hash_features(strings, 10)
        assert np.array_equal(idx1, idx2) and np.array_equal(val1, val2)
        assert idx1.max() < 2**10


class TestScoring:
    def test_zero_weights_give_half(self):
        scorer = ReferenceScorer.zeros()
        assert scorer.score_value(q(), s("s1")) == pytest.approx(0.5)

    def test_module_level_score_delegates(self):
        from reps.verifier import score

        scorer = ReferenceScorer.zeros(bias=1.0)
        result = score(scorer, q(), s("s1"))
        assert result.solution_id == "s1"
        assert result.probability == pytest.approx(scorer.score_value(q(), s("s1")))

    def test_bias_ten(self):
        scorer = ReferenceScorer.zeros(bias=10.0)
        assert scorer.score_value(q(), s("s1")) == pytest.approx(0.9999546021312976, abs=1e-7)

    def test_probability_always_clamped(self):
        scorer = ReferenceScorer.zeros(bias=200.0)
        p = scorer.score_value(q(), s("s1"))
        assert p <= 1 - 1e-7
        scorer = ReferenceScorer.zeros(bias=-200.0)
        assert scorer.score_value(q(), s("s1")) >= 1e-7

    def test_verifier_score_validates_range(self):
        with pytest.raises(DomainError):
            VerifierScore("s", 1.0)


class TestSelectAnswer:
    class FixedVerifier:
        def __init__(self, table):
            self.table = table

        def score(self, question, solution):
            return VerifierScore(solution.id, self.table[solution.id])

    def test_single_candidate(self):
        v = self.FixedVerifier({"a": 0.4})
        only = s("a")
        assert select_answer(v, q(), [only]) is only

    def test_argmax(self):
        v = self.FixedVerifier({"a": 0.2, "b": 0.9, "c": 0.4})
        cands = [s("a"), s("b"), s("c")]
        assert select_answer(v, q(), cands).id == "b"

    def test_all_equal_breaks_to_smallest_id(self):
        v = self.FixedVerifier({"c": 0.5, "b": 0.5, "a": 0.5})
        cands = [s("c"), s("b"), s("a")]
        assert select_answer(v, q(), cands).id == "a"

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            select_answer(self.FixedVerifier({}), q(), [])

    @given(st.permutations([0.11, 0.42, 0.73, 0.24]))
    @settings(max_examples=20)
    def test_monotone_transform_invariance(self, probs):
        table = {f"s{i}": p for i, p in enumerate(probs)}
        base = self.FixedVerifier(table)
        # strictly increasing transform on (0,1)
        transformed = self.FixedVerifier({k: v**3 for k, v in table.items()})
        cands = [s(f"s{i}") for i in range(4)]
        assert (
            select_answer(base, q(), cands).id
            == select_answer(transformed, q(), cands).id
        )


def _toy_linearly_separable(n=60):
    """Positives mention 'signal', negatives don't; trivially separable."""
    corpus = [q("qt")]
    examples = []
    rng = derive_rng(7, "toy")
    for i in range(n):
        label = i % 2
        words = ["signal" if label else "noise", "filler", f"w{rng.randrange(20)}"]
        sol = Solution(
            id=f"t{i:03d}", question_id="qt",
            rationale=" ".join(words) + ". So the answer is yes.",
            answer="yes",
        )
        examples.append(LabeledExample(sol, label, Strategy.BASELINE))
    return corpus, examples


class TestTraining:
    def test_separable_reaches_full_accuracy(self):
        corpus, examples = _toy_linearly_separable()
        result = train_reference_scorer(
            examples, corpus, TrainConfig(lr=2.0, epochs=200, l2=0.0, seed=0)
        )
        correct = sum(
            (result.scorer.score_value(corpus[0], ex.solution) > 0.5) == bool(ex.label)
            for ex in examples
        )
        assert correct == len(examples)

    def test_loss_non_increasing_full_batch(self):
        corpus, examples = _toy_linearly_separable()
        result = train_reference_scorer(
            examples, corpus, TrainConfig(lr=5.0, epochs=60, seed=0)
        )
        diffs = np.diff(result.losses)
        assert (diffs <= 1e-9).all()

    def test_single_class_rejected(self):
        corpus, examples = _toy_linearly_separable()
        positives = [ex for ex in examples if ex.label == 1]
        with pytest.raises(DegenerateData):
            train_reference_scorer(positives, corpus, TrainConfig())

    def test_deterministic(self):
        corpus, examples = _toy_linearly_separable()
        cfg = TrainConfig(lr=1.0, epochs=30, seed=5)
        r1 = train_reference_scorer(examples, corpus, cfg)
        r2 = train_reference_scorer(examples, corpus, cfg)
        assert np.array_equal(r1.scorer.weights, r2.scorer.weights)
        assert r1.scorer.bias == r2.scorer.bias

    def test_duplicated_dataset_matches_single_copy(self):
        corpus, examples = _toy_linearly_separable(n=30)
        cfg = TrainConfig(lr=1.0, epochs=25, seed=0)
        single = train_reference_scorer(examples, corpus, cfg)
        doubled = train_reference_scorer(examples + examples, corpus, cfg)
        np.testing.assert_allclose(
            doubled.scorer.weights, single.scorer.weights, rtol=1e-7, atol=1e-9
        )
        assert doubled.scorer.bias == pytest.approx(single.scorer.bias, rel=1e-7)

    def test_random_labels_give_chance_auc(self):
        # Monte Carlo: a single held-out AUC has SE ~0.06, so average over
        # repetitions before comparing against the chance level
        corpus = [q("qt")]
        aucs = []
        for rep in range(4):
            rng = derive_rng(3, "rand-labels", rep)
            examples = []
            for i in range(600):
                sol = Solution(
                    id=f"r{rep}-{i:03d}", question_id="qt",
                    rationale=" ".join(f"w{rng.randrange(50)}" for _ in range(12))
                    + ". So the answer is yes.",
                    answer="yes",
                )
                examples.append(LabeledExample(sol, rng.randint(0, 1), Strategy.BASELINE))
            train, held = examples[:300], examples[300:]
            result = train_reference_scorer(
                train, corpus, TrainConfig(lr=1.0, epochs=40, seed=rep)
            )
            scores = [
                (result.scorer.score_value(corpus[0], ex.solution), ex.label) for ex in held
            ]
            pos = [p for p, y in scores if y == 1]
            neg = [p for p, y in scores if y == 0]
            wins = sum((p > n_) + 0.5 * (p == n_) for p in pos for n_ in neg)
            aucs.append(wins / (len(pos) * len(neg)))
        assert sum(aucs) / len(aucs) == pytest.approx(0.5, abs=0.05)

    def test_minibatch_mode_trains(self):
        corpus, examples = _toy_linearly_separable()
        result = train_reference_scorer(
            examples, corpus, TrainConfig(lr=1.0, epochs=30, seed=1, batch_size=8)
        )
        assert result.losses[-1] < result.losses[0]

    def test_heldout_positives_score_above_half(self):
        # separable synthetic data: >= 90% of held-out positives get p > 0.5
        from reps.datasets import build_baseline
        from reps.synth import SynthConfig, generate_benchmark

        train = generate_benchmark(SynthConfig(n_questions=120, seed=61, id_prefix="ht"))
        held = generate_benchmark(SynthConfig(n_questions=60, seed=62, id_prefix="hh"))
        train_ds = build_baseline(train.pool, train.questions).examples
        result = train_reference_scorer(
            train_ds, train.questions, TrainConfig(lr=2.0, epochs=80, seed=63)
        )
        held_by_id = {q.id: q for q in held.questions}
        held_pos = [
            sol for sol in held.pool
            if sol.answer == held_by_id[sol.question_id].gold_answer
        ]
        above = sum(
            result.scorer.score_value(held_by_id[sol.question_id], sol) > 0.5
            for sol in held_pos
        )
        assert above / len(held_pos) >= 0.9


class TestGradientCheck:
    def test_analytic_matches_central_differences(self):
        corpus, examples = _toy_linearly_separable(n=20)
        spec = FeatureSpec(hash_bits=8)
        design = build_design(examples, {corpus[0].id: corpus[0]}, spec)
        rng = np.random.default_rng(12)
        h = 1e-5
        active = np.unique(design.cols)
        for trial in range(100):
            w = rng.normal(0, 0.5, design.dim)
            b = float(rng.normal(0, 0.5))
            z = design.logits(w, b)
            p = 1.0 / (1.0 + np.exp(-z))
            grad = design.grad_w((p - design.y) / design.n)
            coord = int(rng.choice(active))
            w_plus, w_minus = w.copy(), w.copy()
            w_plus[coord] += h
            w_minus[coord] -= h

            def loss(weights):
                zz = design.logits(weights, b)
                pp = 1.0 / (1.0 + np.exp(-zz))
                return -float(np.mean(design.y * np.log(pp) + (1 - design.y) * np.log(1 - pp)))

            numeric = (loss(w_plus) - loss(w_minus)) / (2 * h)
            denom = max(abs(numeric), abs(grad[coord]), 1e-8)
            assert abs(grad[coord] - numeric) / denom < 1e-4


class TestModelIO:
    def test_save_load_round_trip(self, tmp_path):
        corpus, examples = _toy_linearly_separable(n=20)
        result = train_reference_scorer(examples, corpus, TrainConfig(epochs=10))
        path = tmp_path / "model.json"
        result.scorer.save(path)
        loaded = ReferenceScorer.load(path)
        assert np.array_equal(loaded.weights, result.scorer.weights)
        assert loaded.bias == result.scorer.bias
        assert loaded.spec == result.scorer.spec
        sol = examples[0].solution
        assert loaded.score_value(corpus[0], sol) == result.scorer.score_value(corpus[0], sol)

    def test_version_gate(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format_version": 99}')
        with pytest.raises(DomainError):
            ReferenceScorer.load(path)


class TestFixtureVerifiers:
    def test_uniform_random_is_stable_per_pair(self):
        v = UniformRandomVerifier(seed=4)
        a = v.score(q(), s("s1")).probability
        b = v.score(q(), s("s1")).probability
        assert a == b

    def test_ground_truth_prefers_valid(self):
        v = GroundTruthVerifier()
        valid = Solution(
            id="v", question_id="q1", rationale="good. the answer is yes",
            answer="yes", extras={"gt_valid": True},
        )
        invalid = s("i", rationale="bad. the answer is yes")
        wrong = s("w", rationale="the answer is no", answer="no")
        pv = v.score(q(), valid).probability
        pi = v.score(q(), invalid).probability
        pw = v.score(q(), wrong).probability
        assert pv > pi > pw
