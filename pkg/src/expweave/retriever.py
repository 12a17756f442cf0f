"""Layered context assembly from a built experience book.

Retrieval is keyed by pipeline phase and detected error types: the phase's
strategies come first, then up to a per-error cap of tips ranked by how much
provenance supports them. Rendering is byte-deterministic so downstream
prompts (and golden-file tests) are stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import PrecondError
from .store import ExperienceBook, FeedbackRecord, Strategy, Tip
from .types import Phase

STRATEGY_HEADER = "=== Strategy for Quality Control ==="
TIPS_HEADER = "=== Detailed Tips (Retrieved {n} tips from Layer 2) ==="
ITEM_PREFIX = "--- "


@dataclass
class RetrievalContext:
    phase: Phase
    strategies: list[Strategy] = field(default_factory=list)
    tips_by_error: dict[str, list[Tip]] = field(default_factory=dict)
    tips_cap: int = 5

    @property
    def total_tips(self) -> int:
        return sum(len(tips) for tips in self.tips_by_error.values())


def retrieve(
    book: ExperienceBook,
    phase: Phase,
    error_types: Sequence[str],
    tips_cap: int,
) -> RetrievalContext:
    """Assemble strategies plus capped per-error tips for one phase.

    Tips are picked per error by descending supporting-unit count, then
    stored order; error types absent from the book are silently skipped, so
    an empty context is a valid result.
    """
    if tips_cap < 1:
        raise PrecondError("tips_cap must be >= 1")
    context = RetrievalContext(phase=phase, tips_cap=tips_cap)
    context.strategies = list(book.strategies.get(phase, []))
    seen = set()
    for error_type in error_types:
        if error_type in seen:
            continue
        seen.add(error_type)
        stored = book.tips.get((phase, error_type))
        if not stored:
            continue
        ranked = sorted(
            enumerate(stored), key=lambda pair: (-len(pair[1].supporting_units), pair[0])
        )
        context.tips_by_error[error_type] = [tip for _, tip in ranked[:tips_cap]]
    return context


def render(context: RetrievalContext) -> str:
    """Emit the two-layer context block with fixed headers.

    Equal contexts always render to identical bytes.
    """
    lines = [STRATEGY_HEADER]
    lines += [f"{ITEM_PREFIX}{s.text}" for s in context.strategies]
    lines.append("")
    lines.append(TIPS_HEADER.format(n=context.total_tips))
    for error_type, tips in context.tips_by_error.items():
        lines.append(f"[{error_type}] Errors:")
        lines += [f"{ITEM_PREFIX}{t.text}" for t in tips]
    return "\n".join(lines) + "\n"


def render_for(
    book: ExperienceBook, phase: Phase, error_types: Sequence[str], tips_cap: int
) -> str:
    return render(retrieve(book, phase, error_types, tips_cap))


def baseline_similar_records(
    memory: Sequence[FeedbackRecord], query: str, k: int
) -> list[FeedbackRecord]:
    """Naive retrieval baseline: top-k records by token Jaccard similarity.

    Tokens are lowercased whitespace splits of source_text; ties break by
    ascending record id.
    """
    if k < 1:
        raise PrecondError("k must be >= 1")
    query_tokens = set(query.lower().split())

    def similarity(record: FeedbackRecord) -> float:
        tokens = set(record.source_text.lower().split())
        union = tokens | query_tokens
        if not union:
            return 0.0
        return len(tokens & query_tokens) / len(union)

    ranked = sorted(memory, key=lambda r: (-similarity(r), r.record_id))
    return ranked[:k]
