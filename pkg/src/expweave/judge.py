"""Multi-dimensional LLM judging and error-detection scoring.

Each feedback dimension has its own rubric prompt returning a 1-5 label plus
reasoning. Detection runs are scored with accuracy and macro one-vs-rest
precision/recall over the error-type label set.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .backends import Backend
from .errors import EmptyInput, MismatchedPair, ParseError, RangeError
from .prompting import complete_json_object
from .types import Dimension

logger = logging.getLogger(__name__)

JUDGE_TEMPLATES: dict[Dimension, str] = {
    Dimension.CORRECTNESS: "correctness_v1",
    Dimension.FORMATTING: "formatting_v1",
    Dimension.MEANINGFULNESS: "meaningfulness_v1",
    Dimension.READABILITY: "readability_v1",
}


@dataclass(frozen=True)
class JudgeScore:
    label: int
    reasoning: str
    dimension: Dimension
    evaluator_id: str
    run_id: int
    text_id: str

    def __post_init__(self):
        if self.label not in (1, 2, 3, 4, 5):
            raise ValueError(f"label must be an integer 1-5, got {self.label}")


@dataclass(frozen=True)
class DetectionOutcome:
    case_id: str
    true_error_type: str
    predicted_error_type: str


def judge_score(
    subject: Mapping[str, str],
    dimension: Dimension,
    evaluator_id: str,
    run_id: int,
    backend: Backend,
    text_id: str = "",
) -> JudgeScore:
    """Run one rubric prompt; the label string is coerced to an int 1-5."""
    template_id = JUDGE_TEMPLATES[dimension]
    obj = complete_json_object(backend, template_id, subject, model_id=evaluator_id)
    if "label" not in obj:
        raise ParseError(f"{template_id}: reply carries no label: {obj!r}")
    try:
        label = int(str(obj["label"]).strip())
    except ValueError as exc:
        raise ParseError(f"{template_id}: label not an integer: {obj['label']!r}") from exc
    if label not in (1, 2, 3, 4, 5):
        raise RangeError(f"{template_id}: label {label} outside 1-5")
    return JudgeScore(
        label=label,
        reasoning=str(obj.get("reasoning", "")),
        dimension=dimension,
        evaluator_id=evaluator_id,
        run_id=run_id,
        text_id=text_id,
    )


def pairwise_diff(with_feedback: JudgeScore, without_feedback: JudgeScore) -> float:
    """Score delta attributable to feedback, for one matched evaluation cell."""
    keys = ("evaluator_id", "run_id", "text_id", "dimension")
    for key in keys:
        if getattr(with_feedback, key) != getattr(without_feedback, key):
            raise MismatchedPair(
                f"scores differ on {key}: "
                f"{getattr(with_feedback, key)!r} vs {getattr(without_feedback, key)!r}"
            )
    return float(with_feedback.label - without_feedback.label)


def detection_metrics(
    outcomes: Sequence[DetectionOutcome],
) -> tuple[float, float, float]:
    """(accuracy, macro-precision, macro-recall) over the observed label set.

    Precision and recall are one-vs-rest per class; the macro means run over
    every class present in truth or prediction, and a class with a zero
    denominator contributes 0.
    """
    if not outcomes:
        raise EmptyInput("detection_metrics needs at least one outcome")
    classes = sorted(
        {o.true_error_type for o in outcomes} | {o.predicted_error_type for o in outcomes}
    )
    correct = sum(1 for o in outcomes if o.predicted_error_type == o.true_error_type)
    accuracy = correct / len(outcomes)
    precisions = []
    recalls = []
    for cls in classes:
        tp = sum(1 for o in outcomes if o.predicted_error_type == cls and o.true_error_type == cls)
        fp = sum(1 for o in outcomes if o.predicted_error_type == cls and o.true_error_type != cls)
        fn = sum(1 for o in outcomes if o.predicted_error_type != cls and o.true_error_type == cls)
        precisions.append(tp / (tp + fp) if tp + fp else 0.0)
        recalls.append(tp / (tp + fn) if tp + fn else 0.0)
    return accuracy, sum(precisions) / len(classes), sum(recalls) / len(classes)


def select_training_cases(
    outcomes: Sequence[DetectionOutcome],
    n_correct: int,
    n_incorrect: int,
    seed: int,
) -> list[DetectionOutcome]:
    """Seeded per-error-type sample of correct and incorrect detections.

    Takes n_correct correctly detected and n_incorrect misdetected cases per
    true error type, without replacement. A type with too few cases
    contributes everything it has; the shortfall is logged, not raised.
    """
    rng = random.Random(seed)
    by_type: dict[str, tuple[list[DetectionOutcome], list[DetectionOutcome]]] = {}
    for outcome in sorted(outcomes, key=lambda o: o.case_id):
        good, bad = by_type.setdefault(outcome.true_error_type, ([], []))
        if outcome.predicted_error_type == outcome.true_error_type:
            good.append(outcome)
        else:
            bad.append(outcome)
    selected: list[DetectionOutcome] = []
    for error_type in sorted(by_type):
        good, bad = by_type[error_type]
        for pool, want, kind in ((good, n_correct, "correct"), (bad, n_incorrect, "incorrect")):
            if len(pool) < want:
                logger.warning(
                    "error type %r: only %d %s cases available, wanted %d",
                    error_type, len(pool), kind, want,
                )
            selected.extend(rng.sample(pool, min(want, len(pool))))
    return selected
