"""Judge scoring, pairwise differences, and detection metrics."""

from __future__ import annotations

import json
import random
from collections import Counter

import pytest

from expweave.errors import EmptyInput, MismatchedPair, ParseError, RangeError
from expweave.judge import (
    JUDGE_TEMPLATES,
    DetectionOutcome,
    JudgeScore,
    detection_metrics,
    judge_score,
    pairwise_diff,
    select_training_cases,
)
from expweave.types import ALL_DIMENSIONS, Dimension

from conftest import register


def _subject(dimension: Dimension, tag: str = "x") -> dict:
    if dimension is Dimension.CORRECTNESS:
        return {"error": f"error text {tag}", "error_type": "Improper Terminology Usage"}
    if dimension is Dimension.MEANINGFULNESS:
        return {"error": f"error text {tag}"}
    if dimension is Dimension.FORMATTING:
        return {
            "report": f"report {tag}",
            "categories": "structure",
            "structure_requirements": "sections",
            "terminology_requirements": "standard terms",
            "style_requirements": "concise",
        }
    return {"report": f"report {tag}"}


def _score(label=4, dimension=Dimension.READABILITY, evaluator="judge-a", run=1, text="t1"):
    return JudgeScore(
        label=label, reasoning="", dimension=dimension,
        evaluator_id=evaluator, run_id=run, text_id=text,
    )


class TestJudgeScore:
    def test_label_string_coerced(self, backend):
        subject = _subject(Dimension.READABILITY)
        register(backend, "readability_v1", subject, '{"label": "4", "reasoning": "clear"}')
        score = judge_score(subject, Dimension.READABILITY, "judge-a", 1, backend, text_id="t1")
        assert score.label == 4
        assert score.reasoning == "clear"

    def test_label_out_of_range(self, backend):
        subject = _subject(Dimension.READABILITY)
        register(backend, "readability_v1", subject, '{"label": "6", "reasoning": "?"}')
        with pytest.raises(RangeError):
            judge_score(subject, Dimension.READABILITY, "judge-a", 1, backend)

    def test_missing_label_is_parse_error(self, backend):
        subject = _subject(Dimension.MEANINGFULNESS)
        reply = json.dumps({"reasoning": "no label here"})
        register(backend, "meaningfulness_v1", subject, reply)
        from expweave.prompting import repair_slots
        register(
            backend, "meaningfulness_v1", repair_slots(subject, reply, "object"), reply
        )
        with pytest.raises(ParseError):
            judge_score(subject, Dimension.MEANINGFULNESS, "judge-a", 1, backend)

    def test_each_dimension_uses_its_own_template(self, backend):
        assert JUDGE_TEMPLATES[Dimension.CORRECTNESS] == "correctness_v1"
        assert JUDGE_TEMPLATES[Dimension.FORMATTING] == "formatting_v1"
        assert JUDGE_TEMPLATES[Dimension.MEANINGFULNESS] == "meaningfulness_v1"
        assert JUDGE_TEMPLATES[Dimension.READABILITY] == "readability_v1"
        for dimension in ALL_DIMENSIONS:
            subject = _subject(dimension)
            register(backend, JUDGE_TEMPLATES[dimension], subject, '{"label": "3", "reasoning": ""}')
            score = judge_score(subject, dimension, "judge-a", 1, backend)
            assert score.label == 3

    def test_scripted_distribution_preserved(self, backend):
        labels = [1, 2, 2, 3, 3, 3, 4, 4, 5, 5]
        for k, label in enumerate(labels):
            subject = _subject(Dimension.READABILITY, tag=f"case{k}")
            register(backend, "readability_v1", subject, json.dumps({"label": str(label), "reasoning": ""}))
        observed = Counter(
            judge_score(_subject(Dimension.READABILITY, tag=f"case{k}"),
                        Dimension.READABILITY, "judge-a", 1, backend).label
            for k in range(len(labels))
        )
        assert observed == Counter(labels)


class TestPairwiseDiff:
    def test_no_change(self):
        assert pairwise_diff(_score(4), _score(4)) == 0.0

    def test_positive_improvement(self):
        assert pairwise_diff(_score(5), _score(3)) == 2.0

    def test_antisymmetric(self):
        rng = random.Random(3)
        for _ in range(50):
            a, b = rng.randint(1, 5), rng.randint(1, 5)
            assert pairwise_diff(_score(a), _score(b)) == -pairwise_diff(_score(b), _score(a))

    def test_mismatched_pair(self):
        with pytest.raises(MismatchedPair):
            pairwise_diff(_score(4, evaluator="judge-a"), _score(4, evaluator="judge-b"))
        with pytest.raises(MismatchedPair):
            pairwise_diff(_score(4, run=1), _score(4, run=2))
        with pytest.raises(MismatchedPair):
            pairwise_diff(_score(4, dimension=Dimension.READABILITY),
                          _score(4, dimension=Dimension.CORRECTNESS))

    def test_batch_mean_matches_summation_oracle(self):
        rng = random.Random(11)
        pairs = [(rng.randint(1, 5), rng.randint(1, 5)) for _ in range(200)]
        diffs = [pairwise_diff(_score(a, text=f"t{k}"), _score(b, text=f"t{k}"))
                 for k, (a, b) in enumerate(pairs)]
        oracle = sum(a - b for a, b in pairs) / len(pairs)
        assert sum(diffs) / len(diffs) == pytest.approx(oracle, abs=1e-12)


def brute_force_metrics(outcomes):
    """Independent confusion-matrix oracle."""
    classes = sorted({o.true_error_type for o in outcomes} | {o.predicted_error_type for o in outcomes})
    index = {c: i for i, c in enumerate(classes)}
    matrix = [[0] * len(classes) for _ in classes]
    for o in outcomes:
        matrix[index[o.true_error_type]][index[o.predicted_error_type]] += 1
    total = sum(sum(row) for row in matrix)
    accuracy = sum(matrix[i][i] for i in range(len(classes))) / total
    precisions, recalls = [], []
    for i in range(len(classes)):
        col = sum(matrix[r][i] for r in range(len(classes)))
        row = sum(matrix[i])
        precisions.append(matrix[i][i] / col if col else 0.0)
        recalls.append(matrix[i][i] / row if row else 0.0)
    return accuracy, sum(precisions) / len(classes), sum(recalls) / len(classes)


class TestDetectionMetrics:
    def test_perfect(self):
        outcomes = [DetectionOutcome(f"c{i}", t, t) for i, t in enumerate(["A", "B", "C"])]
        assert detection_metrics(outcomes) == (1.0, 1.0, 1.0)

    def test_hand_example(self):
        outcomes = [
            DetectionOutcome("c1", "A", "A"),
            DetectionOutcome("c2", "A", "B"),
            DetectionOutcome("c3", "B", "B"),
        ]
        accuracy, macro_p, macro_r = detection_metrics(outcomes)
        assert accuracy == pytest.approx(2 / 3)
        assert macro_p == pytest.approx(3 / 4)
        assert macro_r == pytest.approx(3 / 4)

    def test_single_class_all_wrong(self):
        outcomes = [DetectionOutcome("c1", "A", "B"), DetectionOutcome("c2", "A", "B")]
        accuracy, macro_p, macro_r = detection_metrics(outcomes)
        assert accuracy == 0.0
        assert macro_p == 0.0
        assert macro_r == 0.0

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            detection_metrics([])

    def test_against_oracle_random_instances(self):
        rng = random.Random(5)
        for _ in range(100):
            n_classes = rng.randint(1, 6)
            labels = [f"L{i}" for i in range(n_classes)]
            outcomes = [
                DetectionOutcome(f"c{i}", rng.choice(labels), rng.choice(labels))
                for i in range(rng.randint(1, 50))
            ]
            assert detection_metrics(outcomes) == pytest.approx(brute_force_metrics(outcomes))


def _outcome_fixture(per_type_correct=30, per_type_wrong=30, types=("A", "B")):
    outcomes = []
    counter = 0
    for error_type in types:
        for _ in range(per_type_correct):
            outcomes.append(DetectionOutcome(f"c{counter}", error_type, error_type))
            counter += 1
        for _ in range(per_type_wrong):
            wrong = "Z" if error_type != "Z" else "Y"
            outcomes.append(DetectionOutcome(f"c{counter}", error_type, wrong))
            counter += 1
    return outcomes


class TestSelectTrainingCases:
    def test_ten_and_ten_per_type(self):
        outcomes = _outcome_fixture()
        selected = select_training_cases(outcomes, 10, 10, seed=1)
        assert len(selected) == 2 * 20
        for error_type in ("A", "B"):
            mine = [o for o in selected if o.true_error_type == error_type]
            correct = [o for o in mine if o.predicted_error_type == error_type]
            assert len(mine) == 20 and len(correct) == 10

    def test_zero_correct_requested(self):
        selected = select_training_cases(_outcome_fixture(), 0, 10, seed=1)
        assert all(o.predicted_error_type != o.true_error_type for o in selected)

    def test_seed_determinism(self):
        outcomes = _outcome_fixture()
        first = select_training_cases(outcomes, 10, 10, seed=42)
        second = select_training_cases(outcomes, 10, 10, seed=42)
        assert [o.case_id for o in first] == [o.case_id for o in second]

    def test_shortfall_takes_what_exists(self, caplog):
        outcomes = _outcome_fixture(per_type_correct=3, per_type_wrong=2, types=("A",))
        with caplog.at_level("WARNING"):
            selected = select_training_cases(outcomes, 10, 10, seed=0)
        assert len(selected) == 5
        assert "only" in caplog.text
