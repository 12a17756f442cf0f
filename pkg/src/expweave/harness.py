"""Experiment orchestration: ingestion, splitting, variants, and sweeps.

An experiment runs each test record through the agent loop twice (variant arm
and no-feedback baseline), judges both outputs on the configured dimensions,
and reports mean pairwise score differences. Per-record results stream to a
progress file so an interrupted run resumes without recomputation and ends in
the same report.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .backends import Backend, BackendConfig
from .errors import PrecondError, SchemaError, UsageError
from .judge import DetectionOutcome, judge_score, pairwise_diff
from .pipeline import PipelineConfig, run_pipeline
from .store import (
    OUTCOMES_FORMAT,
    RECORDS_FORMAT,
    ExperienceBook,
    FeedbackRecord,
    record_from_dict,
)
from .types import ALL_DIMENSIONS, ALL_PHASES, Dimension, Phase
from .weaver import WeaveConfig, build_book

VARIANTS = (
    "none",
    "rag_baseline",
    "inject_detection",
    "inject_revision",
    "inject_critique",
    "inject_total",
)

VARIANT_INJECTIONS: dict[str, frozenset[Phase]] = {
    "none": frozenset(),
    "rag_baseline": frozenset(),
    "inject_detection": frozenset({Phase.DETECTION}),
    "inject_revision": frozenset({Phase.REVISION}),
    "inject_critique": frozenset({Phase.SELF_CRITIQUE}),
    "inject_total": frozenset(ALL_PHASES),
}

SWEEP_AXES = ("group-size", "min-error-freq", "tips-cap", "detection-tips-cap")

# Default rubric requirement slots for report-level judging.
FORMATTING_GUIDES = {
    "categories": "Section structure, completeness, internal consistency",
    "structure_requirements": "Findings section followed by an Impression section",
    "terminology_requirements": "Standardized clinical terminology, no colloquial phrasing",
    "style_requirements": "Concise, professional reporting style",
}


@dataclass
class RunConfig:
    backend: BackendConfig | None = None
    weave: WeaveConfig = field(default_factory=WeaveConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    split_seed: int = 0
    split_ratio: float = 0.5
    metric_set: tuple[Dimension, ...] = ALL_DIMENSIONS
    model_id: str = "default"
    dataset: str = "dataset"

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0,1)")


def runconfig_from_dict(data: Mapping) -> RunConfig:
    backend = None
    if data.get("backend"):
        backend = BackendConfig(**data["backend"])
    pipeline_data = dict(data.get("pipeline", {}))
    if "inject" in pipeline_data:
        pipeline_data["inject"] = frozenset(Phase(p) for p in pipeline_data["inject"])
    metric_set = tuple(Dimension(m) for m in data.get("metric_set", [d.value for d in ALL_DIMENSIONS]))
    return RunConfig(
        backend=backend,
        weave=WeaveConfig(**data.get("weave", {})),
        pipeline=PipelineConfig(**pipeline_data),
        split_seed=int(data.get("split_seed", 0)),
        split_ratio=float(data.get("split_ratio", 0.5)),
        metric_set=metric_set,
        model_id=str(data.get("model_id", "default")),
        dataset=str(data.get("dataset", "dataset")),
    )


def load_runconfig(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise SchemaError(f"{path}: config is not valid JSON: {exc}") from exc
    try:
        return runconfig_from_dict(data)
    except (TypeError, ValueError, KeyError) as exc:
        raise SchemaError(f"{path}: bad config: {exc}") from exc


@dataclass
class ExperimentReport:
    dataset: str
    variant: str
    evaluator: str
    count: int
    overall_mean: float
    per_dimension: dict[str, tuple[float, int]]

    def csv_rows(self) -> list[list[str]]:
        rows = [
            [self.dataset, self.variant, self.evaluator, "Overall",
             format(self.overall_mean, ".6f"), str(self.count)]
        ]
        for dimension in sorted(self.per_dimension):
            mean, count = self.per_dimension[dimension]
            rows.append(
                [self.dataset, self.variant, self.evaluator, dimension,
                 format(mean, ".6f"), str(count)]
            )
        return rows


REPORT_CSV_HEADER = ["dataset", "variant", "evaluator", "dimension", "mean_diff", "count"]


# --- ingestion ---


def ingest(path) -> list[FeedbackRecord] | list[DetectionOutcome]:
    """Load a line-delimited dataset; the header line names the schema."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise SchemaError(f"{path}:1: header line is not JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("version") != 1:
        raise SchemaError(f"{path}:1: unrecognized schema version")
    fmt = header.get("format")
    if fmt == RECORDS_FORMAT:
        return _ingest_records(path, lines)
    if fmt == OUTCOMES_FORMAT:
        return _ingest_outcomes(path, lines)
    raise SchemaError(f"{path}:1: unknown format {fmt!r}")


def _parse_line(path, lineno: int, line: str) -> dict:
    try:
        data = json.loads(line)
    except ValueError as exc:
        raise SchemaError(f"{path}:{lineno}: not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}:{lineno}: expected an object")
    return data


def _ingest_records(path, lines: list[str]) -> list[FeedbackRecord]:
    records: list[FeedbackRecord] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        data = _parse_line(path, lineno, line)
        try:
            record = record_from_dict(data)
        except SchemaError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        if record.record_id in seen:
            raise SchemaError(
                f"{path}:{lineno}: duplicate record_id {record.record_id!r} "
                f"(first seen on line {seen[record.record_id]})"
            )
        seen[record.record_id] = lineno
        records.append(record)
    return records


def _ingest_outcomes(path, lines: list[str]) -> list[DetectionOutcome]:
    outcomes: list[DetectionOutcome] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        data = _parse_line(path, lineno, line)
        case_id = data.get("case_id")
        true_type = data.get("true_error_type")
        predicted = data.get("predicted_error_type", "")
        if not case_id or not true_type:
            raise SchemaError(f"{path}:{lineno}: outcome needs case_id and true_error_type")
        if not predicted and not data.get("error_text"):
            raise SchemaError(
                f"{path}:{lineno}: outcome needs predicted_error_type or error_text"
            )
        if case_id in seen:
            raise SchemaError(
                f"{path}:{lineno}: duplicate case_id {case_id!r} "
                f"(first seen on line {seen[case_id]})"
            )
        seen[case_id] = lineno
        outcomes.append(
            DetectionOutcome(
                case_id=str(case_id),
                true_error_type=str(true_type),
                predicted_error_type=str(predicted),
            )
        )
    return outcomes


# --- splitting ---


def split(
    records: Sequence[FeedbackRecord], seed: int, ratio: float = 0.5
) -> tuple[list[FeedbackRecord], list[FeedbackRecord]]:
    """Seeded shuffle then prefix split; train gets floor(ratio * n)."""
    if len(records) < 2:
        raise PrecondError("split needs at least two records")
    if not 0.0 < ratio < 1.0:
        raise UsageError("ratio must be in (0,1)")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    cut = math.floor(ratio * len(shuffled))
    return shuffled[:cut], shuffled[cut:]


# --- judging helpers ---


def judge_subject(dimension: Dimension, original: str, revised: str, error_type: str) -> dict[str, str]:
    """Slot values for judging one revised text along one dimension."""
    bundle = f"Original report:\n{original}\n\nRevised report:\n{revised}"
    if dimension is Dimension.CORRECTNESS:
        return {"error": bundle, "error_type": error_type}
    if dimension is Dimension.MEANINGFULNESS:
        return {"error": bundle}
    if dimension is Dimension.FORMATTING:
        return {"report": revised, **FORMATTING_GUIDES}
    return {"report": revised}


# --- experiments ---


def _record_diffs(
    record: FeedbackRecord,
    config: RunConfig,
    variant: str,
    backend: Backend,
    book: ExperienceBook | None,
    rag_memory: Sequence[FeedbackRecord] | None,
) -> dict[str, float]:
    pipeline_config = replace(config.pipeline, inject=VARIANT_INJECTIONS[variant])
    baseline_config = replace(config.pipeline, inject=frozenset())
    variant_trace = run_pipeline(
        record.source_text,
        book if pipeline_config.inject else None,
        pipeline_config,
        backend,
        model_id=config.model_id,
        rag_memory=rag_memory if variant == "rag_baseline" else None,
    )
    baseline_trace = run_pipeline(
        record.source_text, None, baseline_config, backend, model_id=config.model_id
    )
    error_type = record.error_annotations[0][0] if record.error_annotations else "general quality"
    diffs: dict[str, float] = {}
    for dimension in config.metric_set:
        with_score = judge_score(
            judge_subject(dimension, record.source_text, variant_trace.final, error_type),
            dimension, config.model_id, 1, backend, text_id=record.record_id,
        )
        without_score = judge_score(
            judge_subject(dimension, record.source_text, baseline_trace.final, error_type),
            dimension, config.model_id, 1, backend, text_id=record.record_id,
        )
        diffs[dimension.value] = pairwise_diff(with_score, without_score)
    return diffs


def _load_progress(progress_path) -> dict[str, dict[str, float]]:
    done: dict[str, dict[str, float]] = {}
    path = Path(progress_path)
    if not path.exists():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        done[entry["record_id"]] = entry["diffs"]
    return done


def run_experiment(
    config: RunConfig,
    records: Sequence[FeedbackRecord],
    variant: str,
    backend: Backend,
    progress_path=None,
    leaf_cache: dict | None = None,
) -> ExperimentReport:
    """Compare one variant against the no-feedback baseline on the test split.

    When progress_path is given, per-record results append to it as they
    finish; a rerun skips completed records, so interrupting and resuming
    lands on the same report as an uninterrupted run.
    """
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    train, test = split(records, config.split_seed, config.split_ratio)
    book = None
    if VARIANT_INJECTIONS[variant]:
        book = build_book(
            train, config.weave, backend,
            model_id=config.model_id,
            tips_cap=config.pipeline.tips_cap,
            leaf_cache=leaf_cache,
        )
    rag_memory = train if variant == "rag_baseline" else None

    done = _load_progress(progress_path) if progress_path else {}
    progress_file = open(progress_path, "a", encoding="utf-8") if progress_path else None
    try:
        for record in test:
            if record.record_id in done:
                continue
            diffs = _record_diffs(record, config, variant, backend, book, rag_memory)
            done[record.record_id] = diffs
            if progress_file is not None:
                progress_file.write(
                    json.dumps({"record_id": record.record_id, "diffs": diffs}, sort_keys=True) + "\n"
                )
                progress_file.flush()
    finally:
        if progress_file is not None:
            progress_file.close()

    per_dimension: dict[str, tuple[float, int]] = {}
    all_diffs: list[float] = []
    for dimension in config.metric_set:
        values = [done[r.record_id][dimension.value] for r in test]
        per_dimension[dimension.value] = (sum(values) / len(values), len(values))
        all_diffs.extend(values)
    return ExperimentReport(
        dataset=config.dataset,
        variant=variant,
        evaluator=config.model_id,
        count=len(test),
        overall_mean=sum(all_diffs) / len(all_diffs),
        per_dimension=per_dimension,
    )


def sweep(
    config: RunConfig,
    records: Sequence[FeedbackRecord],
    axis: str,
    values: Sequence[float],
    backend: Backend,
) -> list[tuple[float, ExperimentReport]]:
    """One experiment per axis value with a shared split and leaf cache."""
    if not values:
        raise UsageError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise UsageError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    leaf_cache: dict = {}
    results = []
    for value in values:
        if axis == "group-size":
            swept = replace(config, weave=replace(config.weave, group_size=int(value)))
            variant = "inject_total"
        elif axis == "min-error-freq":
            swept = replace(config, weave=replace(config.weave, min_error_freq=float(value)))
            variant = "inject_total"
        elif axis == "tips-cap":
            swept = replace(config, pipeline=replace(config.pipeline, tips_cap=int(value)))
            variant = "inject_total"
        else:  # detection-tips-cap
            swept = replace(config, pipeline=replace(config.pipeline, tips_cap=int(value)))
            variant = "inject_detection"
        results.append(
            (value, run_experiment(swept, records, variant, backend, leaf_cache=leaf_cache))
        )
    return results
