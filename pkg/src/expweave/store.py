"""Domain records and on-disk persistence.

Pool and book files are single JSON documents with sorted keys and a trailing
content checksum, so saving the same value twice yields byte-identical files
and truncated writes are detected on load. Record sets are line-delimited
JSON with a one-line format header. Writers go through a temp file and an
atomic rename.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import CorruptFile, IntegrityError, SchemaError, VersionMismatch
from .types import Dimension, Phase

POOL_FORMAT = "experience-pool"
BOOK_FORMAT = "experience-book"
RECORDS_FORMAT = "feedback-records"
OUTCOMES_FORMAT = "detection-outcomes"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeedbackRecord:
    """One raw evaluation of a revision along one metric."""

    record_id: str
    source_text: str
    revised_text: str
    metric: Dimension
    score: int
    comment: str
    error_annotations: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not 1 <= self.score <= 5:
            raise ValueError(f"score must be in [1,5], got {self.score}")


@dataclass(frozen=True)
class ExperienceUnit:
    """A distilled experience text; level 0 leaves come straight from records."""

    unit_id: str
    metric: Dimension
    text: str
    level: int
    provenance: frozenset[str]
    children: tuple[str, ...] = ()

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if (self.level == 0) != (len(self.children) == 0):
            raise ValueError("children must be empty iff level is 0")
        if not self.provenance:
            raise ValueError("provenance must be non-empty")


@dataclass(frozen=True)
class Tip:
    phase: Phase
    error_type: str
    text: str
    supporting_units: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.text:
            raise ValueError("tip text must be non-empty")


@dataclass(frozen=True)
class Strategy:
    phase: Phase
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("strategy text must be non-empty")


@dataclass
class ExperienceBook:
    """Layered retrieval structure: per-phase strategies over per-error tips."""

    version: int = 1
    tips: dict[tuple[Phase, str], list[Tip]] = field(default_factory=dict)
    strategies: dict[Phase, list[Strategy]] = field(default_factory=dict)
    error_frequencies: dict[str, int] = field(default_factory=dict)
    config_snapshot: tuple[float, float, int] = (4, 4.0, 5)  # (group size, error gate, tips cap)

    def error_types(self, phase: Phase) -> list[str]:
        """Error types that carry tips for the given phase, in sorted order."""
        return sorted(err for (p, err) in self.tips if p is phase)


# --- canonical JSON helpers ---


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _checksum(payload: Mapping) -> str:
    return hashlib.sha256(canonical_dumps(payload).encode("utf-8")).hexdigest()


def _atomic_write(path: Path, data: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_document(path: Path, expected_format: str) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
        doc = json.loads(raw)
    except ValueError as exc:
        raise SchemaError(f"{path}: not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    if doc.get("format") != expected_format:
        raise SchemaError(f"{path}: expected format {expected_format!r}, got {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {doc.get('version')!r}")
    stored = doc.pop("checksum", None)
    if stored != _checksum(doc):
        raise CorruptFile(f"{path}: checksum mismatch")
    return doc


def _save_document(path: Path, payload: dict) -> None:
    doc = dict(payload)
    doc["checksum"] = _checksum(payload)
    _atomic_write(Path(path), canonical_dumps(doc) + "\n")


# --- unit pool ---


def _unit_to_dict(unit: ExperienceUnit) -> dict:
    return {
        "unit_id": unit.unit_id,
        "metric": unit.metric.value,
        "text": unit.text,
        "level": unit.level,
        "provenance": sorted(unit.provenance),
        "children": list(unit.children),
    }


def _unit_from_dict(d: Mapping) -> ExperienceUnit:
    try:
        return ExperienceUnit(
            unit_id=d["unit_id"],
            metric=Dimension(d["metric"]),
            text=d["text"],
            level=int(d["level"]),
            provenance=frozenset(d["provenance"]),
            children=tuple(d["children"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"bad experience unit: {exc}") from exc


def validate_pool(units: Sequence[ExperienceUnit]) -> None:
    """Linear scan for the provenance-union and level invariants."""
    by_id = {u.unit_id: u for u in units}
    if len(by_id) != len(units):
        raise IntegrityError("duplicate unit ids in pool")
    for unit in units:
        if unit.level == 0:
            continue
        missing = [c for c in unit.children if c not in by_id]
        if missing:
            raise IntegrityError(f"unit {unit.unit_id}: dangling children {missing}")
        children = [by_id[c] for c in unit.children]
        union = frozenset().union(*(c.provenance for c in children))
        if union != unit.provenance:
            raise IntegrityError(f"unit {unit.unit_id}: provenance is not the union of its children")
        if unit.level != 1 + max(c.level for c in children):
            raise IntegrityError(f"unit {unit.unit_id}: level must be 1 + max child level")


def save_pool(pool: Sequence[ExperienceUnit], path) -> None:
    validate_pool(pool)
    payload = {
        "format": POOL_FORMAT,
        "version": FORMAT_VERSION,
        "units": [_unit_to_dict(u) for u in pool],
    }
    _save_document(path, payload)


def load_pool(path) -> list[ExperienceUnit]:
    doc = _load_document(path, POOL_FORMAT)
    units = [_unit_from_dict(d) for d in doc.get("units", [])]
    validate_pool(units)
    return units


# --- experience book ---


def _tip_to_dict(tip: Tip) -> dict:
    return {"text": tip.text, "supporting_units": sorted(tip.supporting_units)}


def save_book(book: ExperienceBook, path, unit_ids: Iterable[str] | None = None) -> None:
    """Persist a book; unit_ids defaults to every unit referenced by a tip."""
    if unit_ids is None:
        unit_ids = set()
        for tips in book.tips.values():
            for tip in tips:
                unit_ids |= tip.supporting_units
    tips_obj: dict[str, dict[str, list[dict]]] = {}
    for (phase, error_type), tips in book.tips.items():
        tips_obj.setdefault(phase.value, {})[error_type] = [_tip_to_dict(t) for t in tips]
    payload = {
        "format": BOOK_FORMAT,
        "version": FORMAT_VERSION,
        "book_version": book.version,
        "tips": tips_obj,
        "strategies": {p.value: [s.text for s in strategies] for p, strategies in book.strategies.items()},
        "error_frequencies": dict(book.error_frequencies),
        "config_snapshot": {
            "group_size": book.config_snapshot[0],
            "min_error_freq": book.config_snapshot[1],
            "tips_cap": book.config_snapshot[2],
        },
        "unit_index": sorted(set(unit_ids)),
    }
    _save_document(path, payload)


def load_book(path) -> ExperienceBook:
    doc = _load_document(path, BOOK_FORMAT)
    snapshot = doc.get("config_snapshot")
    if not isinstance(snapshot, dict) or not {"group_size", "min_error_freq", "tips_cap"} <= set(snapshot):
        raise SchemaError(f"{path}: missing or incomplete config_snapshot")
    unit_index = set(doc.get("unit_index", []))
    tips: dict[tuple[Phase, str], list[Tip]] = {}
    try:
        for phase_name, per_error in doc.get("tips", {}).items():
            phase = Phase(phase_name)
            for error_type, tip_dicts in per_error.items():
                parsed = [
                    Tip(
                        phase=phase,
                        error_type=error_type,
                        text=t["text"],
                        supporting_units=frozenset(t.get("supporting_units", [])),
                    )
                    for t in tip_dicts
                ]
                if not parsed:
                    raise SchemaError(f"{path}: empty tip list for ({phase_name}, {error_type})")
                tips[(phase, error_type)] = parsed
        strategies = {
            Phase(phase_name): [Strategy(phase=Phase(phase_name), text=t) for t in texts]
            for phase_name, texts in doc.get("strategies", {}).items()
        }
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}: bad book structure: {exc}") from exc
    for (phase, error_type), tip_list in tips.items():
        for tip in tip_list:
            dangling = tip.supporting_units - unit_index
            if dangling:
                raise IntegrityError(
                    f"{path}: tip under ({phase.value}, {error_type}) references unknown units {sorted(dangling)}"
                )
    return ExperienceBook(
        version=int(doc.get("book_version", 1)),
        tips=tips,
        strategies=strategies,
        error_frequencies={k: int(v) for k, v in doc.get("error_frequencies", {}).items()},
        config_snapshot=(
            snapshot["group_size"],
            snapshot["min_error_freq"],
            snapshot["tips_cap"],
        ),
    )


# --- feedback record sets (line-delimited) ---


def record_to_dict(record: FeedbackRecord) -> dict:
    return {
        "record_id": record.record_id,
        "source_text": record.source_text,
        "revised_text": record.revised_text,
        "metric": record.metric.value,
        "score": record.score,
        "comment": record.comment,
        "error_annotations": [
            {"error_type": e, "description": d} for e, d in record.error_annotations
        ],
    }


def record_from_dict(d: Mapping) -> FeedbackRecord:
    try:
        return FeedbackRecord(
            record_id=str(d["record_id"]),
            source_text=d["source_text"],
            revised_text=d.get("revised_text", ""),
            metric=Dimension(d["metric"]),
            score=int(d["score"]),
            comment=d.get("comment", ""),
            error_annotations=tuple(
                (a["error_type"], a.get("description", "")) for a in d.get("error_annotations", [])
            ),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"bad feedback record: {exc}") from exc


def save_records(records: Sequence[FeedbackRecord], path) -> None:
    lines = [canonical_dumps({"format": RECORDS_FORMAT, "version": FORMAT_VERSION})]
    lines += [canonical_dumps(record_to_dict(r)) for r in records]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
