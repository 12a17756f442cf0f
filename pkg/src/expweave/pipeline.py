"""Detect / revise / self-critique improvement loop.

Detection runs once per pipeline; the revise-critique pair repeats until the
critique score reaches the threshold or the iteration budget runs out.
Experience injection is switchable per phase: a phase in the inject set gets
the rendered retrieval context in its prompt, any other phase gets an empty
context slot, so toggling injection changes nothing else about the prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .backends import Backend
from .errors import (
    EmptyRevision,
    ExpweaveError,
    ParseError,
    PipelineError,
    RangeError,
)
from .prompting import complete_json_array, complete_json_object, complete_text
from .retriever import baseline_similar_records, render_for
from .store import ExperienceBook, FeedbackRecord
from .types import Phase

RECOMMENDATIONS = ("accept", "revise", "reject")


@dataclass(frozen=True)
class ErrorFinding:
    error_type: str
    description: str
    excerpt: str = ""

    def __post_init__(self):
        if not self.error_type:
            raise ValueError("error_type must be non-empty")


@dataclass(frozen=True)
class CritiqueResult:
    score: float
    issues: tuple[str, ...]
    strengths: tuple[str, ...]
    recommendation: str
    reasoning: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0,1], got {self.score}")
        if self.recommendation not in RECOMMENDATIONS:
            raise ValueError(f"recommendation must be one of {RECOMMENDATIONS}")


@dataclass(frozen=True)
class PipelineConfig:
    critique_threshold: float = 0.6
    max_iterations: int = 3
    inject: frozenset[Phase] = frozenset()
    tips_cap: int = 5

    def __post_init__(self):
        if not 0.0 < self.critique_threshold < 1.0:
            raise ValueError("critique_threshold must be in (0,1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RevisionTrace:
    original: str
    findings: list[ErrorFinding] = field(default_factory=list)
    attempts: list[tuple[str, CritiqueResult]] = field(default_factory=list)
    iterations: int = 0
    final: str = ""
    accepted: bool = False

    def to_dict(self) -> dict:
        return {
            "original": self.original,
            "findings": [
                {"error_type": f.error_type, "description": f.description, "excerpt": f.excerpt}
                for f in self.findings
            ],
            "attempts": [
                {
                    "revised": revised,
                    "critique": {
                        "score": critique.score,
                        "issues": list(critique.issues),
                        "strengths": list(critique.strengths),
                        "recommendation": critique.recommendation,
                        "reasoning": critique.reasoning,
                    },
                }
                for revised, critique in self.attempts
            ],
            "iterations": self.iterations,
            "final": self.final,
            "accepted": self.accepted,
        }


def traces_to_jsonl(traces: Sequence[RevisionTrace], path) -> None:
    """Append-friendly audit export: one trace object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def _context_for(
    phase: Phase,
    book: ExperienceBook | None,
    config: PipelineConfig,
    error_types: Sequence[str],
    rag_block: str = "",
) -> str:
    blocks = []
    if book is not None and phase in config.inject:
        blocks.append(render_for(book, phase, error_types, config.tips_cap))
    if rag_block:
        blocks.append(rag_block)
    return "\n".join(blocks)


def rag_context(memory: Sequence[FeedbackRecord], query: str, k: int = 3) -> str:
    """Optional raw-memory block for the retrieval baseline variant."""
    records = baseline_similar_records(memory, query, k)
    lines = ["Similar past cases:"]
    for record in records:
        lines.append(f"- [{record.metric.value} {record.score}/5] {record.comment}")
    return "\n".join(lines) + "\n"


def detect_errors(
    text: str,
    book: ExperienceBook | None,
    config: PipelineConfig,
    backend: Backend,
    model_id: str = "default",
    rag_block: str = "",
) -> list[ErrorFinding]:
    """Ask for quality problems; injection covers every error the book knows."""
    known = book.error_types(Phase.DETECTION) if book is not None else []
    context = _context_for(Phase.DETECTION, book, config, known, rag_block)
    raw = complete_json_array(
        backend, "detect_v1", {"report": text, "context": context}, model_id=model_id
    )
    findings = []
    for item in raw:
        if not isinstance(item, dict) or not item.get("error_type"):
            raise ParseError(f"finding entries need an error_type: {item!r}")
        findings.append(
            ErrorFinding(
                error_type=str(item["error_type"]),
                description=str(item.get("description", "")),
                excerpt=str(item.get("excerpt", "")),
            )
        )
    return findings


def _findings_block(findings: Sequence[ErrorFinding]) -> str:
    return json.dumps(
        [
            {"error_type": f.error_type, "description": f.description, "excerpt": f.excerpt}
            for f in findings
        ],
        ensure_ascii=False,
    )


def _prior_issues_block(prior_issues: Sequence[str]) -> str:
    if not prior_issues:
        return ""
    return "Issues raised by the previous review:\n" + "\n".join(f"- {i}" for i in prior_issues)


def revise(
    text: str,
    findings: Sequence[ErrorFinding],
    book: ExperienceBook | None,
    config: PipelineConfig,
    backend: Backend,
    prior_issues: Sequence[str] = (),
    model_id: str = "default",
    rag_block: str = "",
) -> str:
    """Produce a revised text; later rounds carry the last critique's issues."""
    error_types = list(dict.fromkeys(f.error_type for f in findings))
    context = _context_for(Phase.REVISION, book, config, error_types, rag_block)
    slots = {
        "report": text,
        "findings": _findings_block(findings),
        "context": context,
        "prior_issues": _prior_issues_block(prior_issues),
    }
    reply = complete_text(backend, "revise_v1", slots, model_id=model_id)
    if not reply.strip():
        raise EmptyRevision("revision reply blank after retry")
    return reply


def self_critique(
    original: str,
    revised: str,
    book: ExperienceBook | None,
    config: PipelineConfig,
    backend: Backend,
    findings: Sequence[ErrorFinding] = (),
    model_id: str = "default",
    rag_block: str = "",
) -> CritiqueResult:
    """Score the revision on [0,1] and recommend accept / revise / reject."""
    error_types = list(dict.fromkeys(f.error_type for f in findings))
    context = _context_for(Phase.SELF_CRITIQUE, book, config, error_types, rag_block)
    slots = {"original": original, "revised": revised, "context": context}
    obj = complete_json_object(backend, "critique_v1", slots, model_id=model_id)
    try:
        score = float(obj["score"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"critique reply lacks a numeric score: {obj!r}") from exc
    if not 0.0 <= score <= 1.0:
        raise RangeError(f"critique score {score} outside [0,1]")
    recommendation = str(obj.get("recommendation", "")).lower()
    if recommendation not in RECOMMENDATIONS:
        raise ParseError(f"critique recommendation {recommendation!r} not in {RECOMMENDATIONS}")
    return CritiqueResult(
        score=score,
        issues=tuple(str(i) for i in obj.get("issues", [])),
        strengths=tuple(str(s) for s in obj.get("strengths", [])),
        recommendation=recommendation,
        reasoning=str(obj.get("reasoning", "")),
    )


def run_pipeline(
    text: str,
    book: ExperienceBook | None,
    config: PipelineConfig,
    backend: Backend,
    model_id: str = "default",
    rag_memory: Sequence[FeedbackRecord] | None = None,
) -> RevisionTrace:
    """Detect once, then revise and critique until accepted or out of budget.

    accepted reflects the last critique; final is the best-scoring attempt
    (ties favor the latest). A critique failure aborts with the partial trace
    attached to the raised PipelineError.
    """
    rag_block = rag_context(rag_memory, text) if rag_memory else ""
    trace = RevisionTrace(original=text)
    trace.findings = detect_errors(text, book, config, backend, model_id, rag_block)
    prior_issues: tuple[str, ...] = ()
    for _ in range(config.max_iterations):
        revised = revise(
            text, trace.findings, book, config, backend, prior_issues, model_id, rag_block
        )
        try:
            critique = self_critique(
                text, revised, book, config, backend, trace.findings, model_id, rag_block
            )
        except ExpweaveError as exc:
            trace.iterations = len(trace.attempts)
            raise PipelineError(f"critique failed: {exc}", partial_trace=trace) from exc
        trace.attempts.append((revised, critique))
        if critique.score >= config.critique_threshold:
            break
        prior_issues = critique.issues
    trace.iterations = len(trace.attempts)
    best_index = max(
        range(len(trace.attempts)),
        key=lambda i: (trace.attempts[i][1].score, i),
    )
    trace.final = trace.attempts[best_index][0]
    trace.accepted = trace.attempts[-1][1].score >= config.critique_threshold
    return trace
