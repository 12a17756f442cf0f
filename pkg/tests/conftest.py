"""Shared fixtures: record factories and scripted-backend keying helpers.

The scripted backend is keyed strictly by (template_id, slot_digest), so the
helpers here compute the same slot values the library will build and register
replies for them. Tree registration walks the deterministic grouping rule
independently, which doubles as the oracle for the weave structure tests.
"""

from __future__ import annotations

import json

import pytest

from expweave.backends import ScriptedBackend, slot_digest
from expweave.pipeline import _findings_block, _prior_issues_block
from expweave.prompting import ordered_slots, repair_slots
from expweave.store import ExperienceUnit, FeedbackRecord
from expweave.types import Dimension
from expweave.weaver import (
    WeaveConfig,
    abstraction_slots,
    combine_slots,
    strategy_slots,
    tips_slots,
)


def register(backend: ScriptedBackend, template_id: str, slots: dict, reply: str) -> None:
    values = ordered_slots(template_id, slots)
    backend.register_script(template_id, slot_digest(template_id, values), reply)


def register_repair(
    backend: ScriptedBackend, template_id: str, slots: dict, first_reply: str, reply: str,
    kind: str = "array",
) -> None:
    register(backend, template_id, repair_slots(slots, first_reply, kind), reply)


def make_record(
    record_id: str,
    metric: Dimension = Dimension.FORMATTING,
    score: int = 3,
    comment: str | None = None,
    annotations: tuple[tuple[str, str], ...] = (),
    source_text: str = "Findings: clear lungs. Impression: normal.",
) -> FeedbackRecord:
    if comment is None:
        comment = f"revision of {record_id} needs standardized section headers"
    return FeedbackRecord(
        record_id=record_id,
        source_text=source_text,
        revised_text=source_text,
        metric=metric,
        score=score,
        comment=comment,
        error_annotations=annotations,
    )


def leaf_unit(unit_id: str, text: str, record_id: str, metric=Dimension.FORMATTING) -> ExperienceUnit:
    return ExperienceUnit(
        unit_id=unit_id,
        metric=metric,
        text=text,
        level=0,
        provenance=frozenset({record_id}),
    )


def script_abstraction(
    backend: ScriptedBackend, record: FeedbackRecord, config: WeaveConfig, items: list[str]
) -> None:
    register(backend, "abstract_v1", abstraction_slots(record, config), json.dumps(items))


def default_merge_items(group_texts: list[str]) -> list[str]:
    """Set-union merge of the groups' newline-separated items, input order kept."""
    merged: list[str] = []
    for text in group_texts:
        for item in text.split("\n"):
            if item and item not in merged:
                merged.append(item)
    return merged


def script_tree(
    backend: ScriptedBackend,
    leaf_texts: list[str],
    group_size: int,
    merge_items=default_merge_items,
) -> list[str]:
    """Register every combine call the grouping rule will make.

    Walks the level structure independently of the weaver (consecutive groups
    of group_size, trailing single carried up, stop below group_size) and
    returns the expected final-level texts.
    """
    level = list(leaf_texts)
    while len(level) >= group_size:
        groups = [level[i : i + group_size] for i in range(0, len(level), group_size)]
        carried = []
        if len(groups[-1]) == 1:
            carried = groups.pop()
        merged_level = []
        for group in groups:
            items = merge_items(group)
            register(backend, "combine_v1", combine_slots(group), json.dumps(items))
            merged_level.append("\n".join(items))
        level = merged_level + carried
    return level


def script_tips(
    backend: ScriptedBackend, pool: list[ExperienceUnit], phase, error_type: str, items: list[str]
) -> None:
    register(backend, "tips_v1", tips_slots(pool, phase, error_type), json.dumps(items))


def script_strategies(backend: ScriptedBackend, tips, phase, items: list[str]) -> None:
    register(backend, "strategy_v1", strategy_slots(tips, phase), json.dumps(items))


def detect_slots(text: str, context: str = "") -> dict:
    return {"report": text, "context": context}


def revise_slots(text: str, findings, context: str = "", prior_issues=()) -> dict:
    return {
        "report": text,
        "findings": _findings_block(findings),
        "context": context,
        "prior_issues": _prior_issues_block(prior_issues),
    }


def critique_slots(original: str, revised: str, context: str = "") -> dict:
    return {"original": original, "revised": revised, "context": context}


def critique_reply(score: float, issues=(), strengths=(), recommendation: str = "revise",
                   reasoning: str = "ok") -> str:
    return json.dumps(
        {
            "score": score,
            "issues": list(issues),
            "strengths": list(strengths),
            "recommendation": recommendation,
            "reasoning": reasoning,
        }
    )


class RecordingBackend:
    """Wraps a backend and keeps every request, for prompt and count checks."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)

    def count(self, template_id: str) -> int:
        return sum(1 for r in self.requests if r.template_id == template_id)


@pytest.fixture
def backend() -> ScriptedBackend:
    return ScriptedBackend()
