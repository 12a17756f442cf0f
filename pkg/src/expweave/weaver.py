"""Two-stage experience weaving.

Stage 1 abstracts each feedback record into leaf experience units and merges
them metric-by-metric through a fixed-arity combination tree. Stage 2 pools
the surviving units across metrics and distills them into error-specific tips
(gated by a minimum error frequency) and per-phase strategies.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .backends import Backend, slot_digest
from .errors import EmptyAbstraction, MergeParseError, ParseError, PrecondError
from .prompting import complete_json_array, ordered_slots
from .store import ExperienceBook, ExperienceUnit, FeedbackRecord, Strategy, Tip, save_pool
from .types import ALL_PHASES, Dimension, Phase

logger = logging.getLogger(__name__)


class ClampWarning(UserWarning):
    """Reply carried fewer items than the advisory lower bound."""


class BuildWarning(UserWarning):
    """Book build completed but skipped a stage (e.g. no error passed the gate)."""


PHASE_DESCRIPTIONS: dict[Phase, str] = {
    Phase.DETECTION: "error detection",
    Phase.REVISION: "text revision",
    Phase.SELF_CRITIQUE: "self-critique quality control",
}

_ORDINALS = (
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth",
    "Seventh", "Eighth", "Ninth", "Tenth", "Eleventh", "Twelfth",
)


@dataclass(frozen=True)
class WeaveConfig:
    """Knobs for both weaving stages.

    min_error_freq below 1 reads as a fraction of records (strictly more
    than that share must carry the error); 1 or above reads as an absolute
    record count (at least that many records).
    """

    group_size: int = 4
    min_error_freq: float = 4.0
    leaf_min: int = 5
    leaf_max: int = 8
    tips_min: int = 5
    tips_max: int = 8
    strategies_min: int = 2
    strategies_max: int = 4

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.min_error_freq <= 0:
            raise ValueError("min_error_freq must be > 0")
        for lo, hi in ((self.leaf_min, self.leaf_max), (self.tips_min, self.tips_max),
                       (self.strategies_min, self.strategies_max)):
            if lo > hi or lo < 1:
                raise ValueError("clamp bounds must satisfy 1 <= min <= max")


def _clamp(items: list[str], lo: int, hi: int, what: str) -> list[str]:
    """Hard upper clamp, advisory lower clamp."""
    if len(items) > hi:
        return items[:hi]
    if 0 < len(items) < lo:
        warnings.warn(f"{what}: got {len(items)} items, advisory minimum is {lo}", ClampWarning)
    return items


def _string_items(raw: list) -> list[str]:
    return [str(item).strip() for item in raw if str(item).strip()]


# --- Stage 1: abstraction ---


def abstraction_slots(record: FeedbackRecord, config: WeaveConfig) -> dict[str, str]:
    """Slot values for one abstraction call; exposed so tests can key scripts."""
    lines = [
        f"Metric: {record.metric.value}",
        f"Score: {record.score}/5",
        f"Comment: {record.comment}",
    ]
    if record.error_annotations:
        lines.append("Annotated errors:")
        lines += [f"- {etype}: {desc}" for etype, desc in record.error_annotations]
    return {
        "metric_name": record.metric.value,
        "feedback_text": "\n".join(lines),
        "leaf_min": str(config.leaf_min),
        "leaf_max": str(config.leaf_max),
    }


def _leaf_id(record_id: str, metric: Dimension, index: int) -> str:
    return f"{record_id}.{metric.value}.0.{index}"


def abstract_record(
    record: FeedbackRecord,
    metric: Dimension,
    backend: Backend,
    config: WeaveConfig = WeaveConfig(),
    model_id: str = "default",
) -> list[ExperienceUnit]:
    """Distill one feedback record into level-0 experience units."""
    if record.metric is not metric:
        raise PrecondError(f"record {record.record_id} carries metric {record.metric.value}, not {metric.value}")
    slots = abstraction_slots(record, config)
    raw = complete_json_array(
        backend, "abstract_v1", slots, model_id=model_id, min_items=1, require_strings=True
    )
    items = _clamp(_string_items(raw), config.leaf_min, config.leaf_max, f"abstraction of {record.record_id}")
    if not items:
        raise EmptyAbstraction(f"record {record.record_id}: zero experience items after retry")
    return [
        ExperienceUnit(
            unit_id=_leaf_id(record.record_id, metric, i),
            metric=metric,
            text=text,
            level=0,
            provenance=frozenset({record.record_id}),
        )
        for i, text in enumerate(items)
    ]


# --- Stage 1: combination tree ---


def combine_slots(texts: Sequence[str]) -> dict[str, str]:
    """Slot values for one combination call over the grouped unit texts."""
    parts = []
    for k, text in enumerate(texts):
        label = _ORDINALS[k] if k < len(_ORDINALS) else f"Set {k + 1}"
        parts.append(f"{label} set of experience:\n\n{text}")
    return {"experience_sets": "\n\n".join(parts)}


def _merged_id(children: Sequence[ExperienceUnit]) -> str:
    digest = hashlib.sha256("|".join(c.unit_id for c in children).encode("utf-8")).hexdigest()
    return f"m.{digest[:16]}"


def _merge_group(
    group: Sequence[ExperienceUnit], backend: Backend, model_id: str
) -> ExperienceUnit:
    slots = combine_slots([u.text for u in group])
    try:
        raw = complete_json_array(
            backend, "combine_v1", slots, model_id=model_id, min_items=1, require_strings=True
        )
    except ParseError as exc:
        raise MergeParseError(str(exc)) from exc
    items = _string_items(raw)
    if not items:
        raise MergeParseError("combination reply held no usable suggestions after retry")
    return ExperienceUnit(
        unit_id=_merged_id(group),
        metric=group[0].metric,
        text="\n".join(items),
        level=1 + max(u.level for u in group),
        provenance=frozenset().union(*(u.provenance for u in group)),
        children=tuple(u.unit_id for u in group),
    )


def weave_tree(
    units: Sequence[ExperienceUnit],
    config: WeaveConfig,
    backend: Backend,
    model_id: str = "default",
    max_workers: int = 1,
    created: list[ExperienceUnit] | None = None,
) -> list[ExperienceUnit]:
    """Merge units in consecutive groups of group_size until fewer remain.

    The final group of a level may be smaller but never below 2; a lone
    leftover unit is carried up unmerged. Merges within one level may run
    concurrently; levels are sequential barriers. Newly created units are
    appended to ``created`` when provided (for pool persistence).
    """
    units = list(units)
    if not units:
        return []
    metrics = {u.metric for u in units}
    if len(metrics) > 1:
        raise PrecondError(f"weave_tree expects a single metric, got {sorted(m.value for m in metrics)}")
    level = units
    while len(level) >= config.group_size:
        groups = [level[i : i + config.group_size] for i in range(0, len(level), config.group_size)]
        carried: list[ExperienceUnit] = []
        if len(groups[-1]) == 1:
            carried = groups.pop()
        if max_workers > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = [pool.submit(_merge_group, g, backend, model_id) for g in groups]
                merged = [f.result() for f in futures]
        else:
            merged = [_merge_group(g, backend, model_id) for g in groups]
        if created is not None:
            created.extend(merged)
        level = merged + carried
    return level


# --- Stage 2: gating ---


def count_error_frequencies(records: Sequence[FeedbackRecord]) -> dict[str, int]:
    """Record-level counts: how many distinct records carry each error type."""
    counts: Counter[str] = Counter()
    for record in records:
        for error_type in {etype for etype, _ in record.error_annotations}:
            counts[error_type] += 1
    return dict(counts)


def select_errors(
    freqs: Mapping[str, int], n_records: int, min_error_freq: float
) -> set[str]:
    """Apply the frequency gate in fraction (<1, strict) or count (>=1) mode."""
    if n_records < 1:
        raise PrecondError("n_records must be >= 1")
    if min_error_freq < 1:
        threshold = min_error_freq * n_records
        return {e for e, c in freqs.items() if c > threshold}
    return {e for e, c in freqs.items() if c >= min_error_freq}


# --- Stage 2: tips and strategies ---


def _experience_list(pool: Sequence[ExperienceUnit]) -> str:
    return "\n".join(f"{i + 1}. {u.text}" for i, u in enumerate(pool))


def tips_slots(pool: Sequence[ExperienceUnit], phase: Phase, error_type: str) -> dict[str, str]:
    return {
        "phase_description": PHASE_DESCRIPTIONS[phase],
        "error_type": error_type,
        "experience_list": _experience_list(pool),
    }


def distill_tips(
    pool: Sequence[ExperienceUnit],
    phase: Phase,
    error_type: str,
    backend: Backend,
    config: WeaveConfig = WeaveConfig(),
    model_id: str = "default",
) -> list[Tip]:
    """Extract error-specific tips for one phase from the cross-metric pool."""
    if not pool:
        raise PrecondError("tip distillation needs a non-empty experience pool")
    raw = complete_json_array(
        backend, "tips_v1", tips_slots(pool, phase, error_type),
        model_id=model_id, min_items=1, require_strings=True,
    )
    items = _clamp(_string_items(raw), config.tips_min, config.tips_max, f"tips for {error_type}")
    supporting = frozenset(u.unit_id for u in pool)
    return [Tip(phase=phase, error_type=error_type, text=t, supporting_units=supporting) for t in items]


def strategy_slots(tips_for_phase: Sequence[Tip], phase: Phase) -> dict[str, str]:
    return {
        "phase_description": PHASE_DESCRIPTIONS[phase],
        "tip_count": str(len(tips_for_phase)),
        "tips_list": "\n".join(f"{i + 1}. {t.text}" for i, t in enumerate(tips_for_phase)),
    }


def distill_strategies(
    tips_for_phase: Sequence[Tip],
    phase: Phase,
    backend: Backend,
    config: WeaveConfig = WeaveConfig(),
    model_id: str = "default",
) -> list[Strategy]:
    """Condense one phase's tips into a handful of high-level strategies."""
    if not tips_for_phase:
        raise PrecondError("strategy distillation needs at least one tip")
    raw = complete_json_array(
        backend, "strategy_v1", strategy_slots(tips_for_phase, phase),
        model_id=model_id, min_items=1, require_strings=True,
    )
    items = _clamp(
        _string_items(raw), config.strategies_min, config.strategies_max,
        f"strategies for {phase.value}",
    )
    return [Strategy(phase=phase, text=t) for t in items]


# --- end-to-end build ---


def abstraction_cache_key(record: FeedbackRecord, config: WeaveConfig) -> tuple[str, str, str]:
    """(record id, metric, request digest): leaves don't depend on tree knobs."""
    digest = slot_digest("abstract_v1", ordered_slots("abstract_v1", abstraction_slots(record, config)))
    return (record.record_id, record.metric.value, digest)


def build_book(
    records: Sequence[FeedbackRecord],
    config: WeaveConfig,
    backend: Backend,
    model_id: str = "default",
    tips_cap: int = 5,
    pool_path=None,
    leaf_cache: dict | None = None,
    max_workers: int = 1,
) -> ExperienceBook:
    """Run both weaving stages over a record set and assemble the book.

    The full unit pool (leaves plus every merged unit) is persisted to
    pool_path before Stage 2 starts, so a Stage 2 failure never loses the
    Stage 1 work.
    """
    if not records:
        raise PrecondError("build_book needs at least one record")

    by_metric: dict[Dimension, list[ExperienceUnit]] = {}
    all_units: list[ExperienceUnit] = []

    def leaves_for(record: FeedbackRecord) -> list[ExperienceUnit]:
        if leaf_cache is not None:
            key = abstraction_cache_key(record, config)
            if key in leaf_cache:
                return leaf_cache[key]
        leaves = abstract_record(record, record.metric, backend, config, model_id)
        if leaf_cache is not None:
            leaf_cache[abstraction_cache_key(record, config)] = leaves
        return leaves

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            leaf_lists = list(pool.map(leaves_for, records))
    else:
        leaf_lists = [leaves_for(r) for r in records]
    for record, leaves in zip(records, leaf_lists):
        by_metric.setdefault(record.metric, []).extend(leaves)
        all_units.extend(leaves)

    final_pool: list[ExperienceUnit] = []
    for metric, leaves in by_metric.items():
        created: list[ExperienceUnit] = []
        finals = weave_tree(leaves, config, backend, model_id, max_workers, created)
        all_units.extend(created)
        final_pool.extend(finals)

    if pool_path is not None:
        save_pool(all_units, pool_path)

    freqs = count_error_frequencies(records)
    selected = select_errors(freqs, len(records), config.min_error_freq)

    book = ExperienceBook(
        version=1,
        error_frequencies=freqs,
        config_snapshot=(config.group_size, config.min_error_freq, tips_cap),
    )
    if not selected:
        warnings.warn("no error type passed the frequency gate; book has no tip layer", BuildWarning)
        return book

    for phase in ALL_PHASES:
        phase_tips: list[Tip] = []
        for error_type in sorted(selected):
            tips = distill_tips(final_pool, phase, error_type, backend, config, model_id)
            if tips:
                book.tips[(phase, error_type)] = tips
                phase_tips.extend(tips)
        if phase_tips:
            book.strategies[phase] = distill_strategies(phase_tips, phase, backend, config, model_id)
    return book
