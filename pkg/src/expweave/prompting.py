"""Prompt templates and reply parsing.

Templates are plain text files with named {slot} markers. Only declared slot
names are substituted, so literal JSON braces in the prompt body survive
rendering. Every LLM call that expects structured output gets exactly one
repair retry: the raw reply is sent back with a fix-it instruction before the
call fails with ParseError.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping

from .backends import Backend, ChatRequest, ChatResponse, slot_digest
from .errors import ParseError


@dataclass(frozen=True)
class TemplateSpec:
    template_id: str
    slots: tuple[str, ...]


TEMPLATES: dict[str, TemplateSpec] = {
    spec.template_id: spec
    for spec in (
        TemplateSpec("abstract_v1", ("metric_name", "feedback_text", "leaf_min", "leaf_max")),
        TemplateSpec("combine_v1", ("experience_sets",)),
        TemplateSpec("tips_v1", ("phase_description", "error_type", "experience_list")),
        TemplateSpec("strategy_v1", ("phase_description", "tip_count", "tips_list")),
        TemplateSpec("detect_v1", ("report", "context")),
        TemplateSpec("revise_v1", ("report", "findings", "context", "prior_issues")),
        TemplateSpec("critique_v1", ("original", "revised", "context")),
        TemplateSpec("correctness_v1", ("error", "error_type")),
        TemplateSpec(
            "formatting_v1",
            (
                "report",
                "categories",
                "structure_requirements",
                "terminology_requirements",
                "style_requirements",
            ),
        ),
        TemplateSpec("meaningfulness_v1", ("error",)),
        TemplateSpec("readability_v1", ("report",)),
    )
}

# Extra slot appended to the original slots when building a repair request, so
# the retry key stays deterministic and scriptable.
REPAIR_SLOT = "repair_previous"

_REPAIR_INSTRUCTIONS = {
    "array": "Your previous reply was not a valid JSON array. Reply again with ONLY a valid JSON array, no markdown and no extra text.",
    "object": "Your previous reply was not a valid JSON object. Reply again with ONLY a valid JSON object, no markdown and no extra text.",
    "text": "Your previous reply was empty. Reply again with the requested text.",
}


def template_text(template_id: str) -> str:
    if template_id not in TEMPLATES:
        raise KeyError(f"unknown template {template_id!r}")
    path = resources.files("expweave").joinpath("templates", f"{template_id}.txt")
    return path.read_text(encoding="utf-8")


def ordered_slots(template_id: str, slots: Mapping[str, Any]) -> dict[str, str]:
    """Slot values stringified and ordered per the template declaration."""
    spec = TEMPLATES[template_id]
    missing = [name for name in spec.slots if name not in slots]
    if missing:
        raise KeyError(f"{template_id}: missing slot values {missing}")
    extra = [name for name in slots if name not in spec.slots and name != REPAIR_SLOT]
    if extra:
        raise KeyError(f"{template_id}: undeclared slots {extra}")
    ordered = {name: str(slots[name]) for name in spec.slots}
    if REPAIR_SLOT in slots:
        ordered[REPAIR_SLOT] = str(slots[REPAIR_SLOT])
    return ordered


def render(template_id: str, slots: Mapping[str, Any]) -> str:
    """Substitute declared slots; leave any other brace construct untouched."""
    values = ordered_slots(template_id, slots)
    text = template_text(template_id)

    def sub(match: re.Match) -> str:
        name = match.group(1)
        return values[name] if name in values else match.group(0)

    return re.sub(r"\{(\w+)\}", sub, text)


def build_request(
    template_id: str,
    slots: Mapping[str, Any],
    model_id: str = "default",
    temperature: float = 0.0,
    max_tokens: int = 2048,
) -> ChatRequest:
    values = ordered_slots(template_id, slots)
    prompt = render(template_id, {k: v for k, v in values.items() if k != REPAIR_SLOT})
    messages: list[tuple[str, str]] = [("user", prompt)]
    if REPAIR_SLOT in values:
        kind, _, raw = values[REPAIR_SLOT].lstrip("[").partition("]")
        messages.append(("assistant", raw if raw else "(empty reply)"))
        messages.append(("user", _REPAIR_INSTRUCTIONS.get(kind, _REPAIR_INSTRUCTIONS["object"])))
    return ChatRequest(
        model_id=model_id,
        messages=tuple(messages),
        temperature=temperature,
        max_tokens=max_tokens,
        template_id=template_id,
        slot_digest=slot_digest(template_id, values),
    )


def repair_slots(slots: Mapping[str, Any], previous_reply: str, kind: str) -> dict[str, Any]:
    """Slot set for the deterministic one-shot repair request."""
    merged = dict(slots)
    merged[REPAIR_SLOT] = f"[{kind}]{previous_reply}"
    return merged


def extract_json_block(text: str, opener: str, closer: str) -> Any | None:
    """Parse text as JSON, or the first balanced top-level block inside it."""
    text = (text or "").strip()
    if not text:
        return None
    try:
        return json.loads(text)
    except ValueError:
        pass
    start = text.find(opener)
    end = text.rfind(closer)
    if start != -1 and end > start:
        try:
            return json.loads(text[start : end + 1])
        except ValueError:
            return None
    return None


def _ask(backend: Backend, template_id, slots, model_id, temperature, max_tokens) -> ChatResponse:
    request = build_request(template_id, slots, model_id, temperature, max_tokens)
    return backend.complete(request)


def complete_json_array(
    backend: Backend,
    template_id: str,
    slots: Mapping[str, Any],
    model_id: str = "default",
    temperature: float = 0.0,
    max_tokens: int = 2048,
    min_items: int = 0,
    require_strings: bool = False,
) -> list:
    """Completion that must parse as a JSON array, with one repair retry.

    A reply that parses but is shorter than min_items (or holds non-strings
    when require_strings is set) also consumes the repair retry; the final
    parsed array is returned as-is, so callers can tell an empty result from
    an unparseable one.
    """

    def good(parsed) -> bool:
        if not isinstance(parsed, list):
            return False
        if require_strings and any(not isinstance(item, str) for item in parsed):
            return False
        return len(parsed) >= min_items

    reply = _ask(backend, template_id, slots, model_id, temperature, max_tokens).content
    parsed = extract_json_block(reply, "[", "]")
    if good(parsed):
        return parsed
    def well_formed(parsed) -> bool:
        return isinstance(parsed, list) and (
            not require_strings or all(isinstance(item, str) for item in parsed)
        )

    retry_slots = repair_slots(slots, reply, "array")
    retry_reply = _ask(backend, template_id, retry_slots, model_id, temperature, max_tokens).content
    retry_parsed = extract_json_block(retry_reply, "[", "]")
    if well_formed(retry_parsed):
        return retry_parsed
    if well_formed(parsed):
        return parsed
    raise ParseError(
        f"{template_id}: reply not a JSON array after repair retry: {retry_reply[:120]!r}"
    )


def complete_json_object(
    backend: Backend,
    template_id: str,
    slots: Mapping[str, Any],
    model_id: str = "default",
    temperature: float = 0.0,
    max_tokens: int = 2048,
) -> dict:
    """Completion that must parse as a JSON object, with one repair retry."""
    reply = _ask(backend, template_id, slots, model_id, temperature, max_tokens).content
    parsed = extract_json_block(reply, "{", "}")
    if isinstance(parsed, dict):
        return parsed
    retry_slots = repair_slots(slots, reply, "object")
    retry_reply = _ask(backend, template_id, retry_slots, model_id, temperature, max_tokens).content
    parsed = extract_json_block(retry_reply, "{", "}")
    if isinstance(parsed, dict):
        return parsed
    raise ParseError(
        f"{template_id}: reply not a JSON object after repair retry: {retry_reply[:120]!r}"
    )


def complete_text(
    backend: Backend,
    template_id: str,
    slots: Mapping[str, Any],
    model_id: str = "default",
    temperature: float = 0.0,
    max_tokens: int = 2048,
) -> str:
    """Completion that must be non-blank text, with one repair retry."""
    reply = _ask(backend, template_id, slots, model_id, temperature, max_tokens).content
    if reply.strip():
        return reply
    retry_slots = repair_slots(slots, reply, "text")
    retry_reply = _ask(backend, template_id, retry_slots, model_id, temperature, max_tokens).content
    return retry_reply
