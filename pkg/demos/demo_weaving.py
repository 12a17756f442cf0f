"""Walk through both weaving stages on a small scripted fixture.

Eight feedback records (two metrics) are abstracted into experience units,
merged through the combination tree, gated by error frequency, and distilled
into tips and strategies. The scripted backend stands in for a live model, so
this runs offline and deterministically.
"""

import json

from expweave import ScriptedBackend, WeaveConfig, build_book
from expweave.backends import slot_digest
from expweave.prompting import ordered_slots
from expweave.store import FeedbackRecord, Tip
from expweave.types import ALL_PHASES, Dimension
from expweave.weaver import (
    abstraction_slots,
    combine_slots,
    strategy_slots,
    tips_slots,
)


def register(backend, template_id, slots, reply):
    digest = slot_digest(template_id, ordered_slots(template_id, slots))
    backend.register_script(template_id, digest, reply)


def walk_tree_scripts(backend, leaf_texts, group_size):
    """Register a combine reply for every merge the grouping rule will make."""
    level = list(leaf_texts)
    while len(level) >= group_size:
        groups = [level[i:i + group_size] for i in range(0, len(level), group_size)]
        carried = []
        if len(groups[-1]) == 1:
            carried = groups.pop()
        merged = []
        for group in groups:
            items = []
            for text in group:              # naive dedup-union merge
                for item in text.split("\n"):
                    if item not in items:
                        items.append(item)
            items = items[:4]
            register(backend, "combine_v1", combine_slots(group), json.dumps(items))
            merged.append("\n".join(items))
        level = merged + carried
    return level


def main():
    config = WeaveConfig(group_size=4, min_error_freq=2)
    backend = ScriptedBackend()

    # two records per metric carry a "Vague Negation" annotation, one carries
    # a rare error that the frequency gate (>= 2 records) will drop
    records = []
    for i in range(8):
        metric = Dimension.FORMATTING if i < 4 else Dimension.READABILITY
        annotations = ()
        if i in (0, 1, 4, 5):
            annotations = (("Vague Negation", "uses loose negative phrasing"),)
        elif i == 2:
            annotations = (("Rare Glitch", "one-off artifact"),)
        records.append(FeedbackRecord(
            record_id=f"r{i}",
            source_text=f"Findings for case {i}.",
            revised_text=f"Revised findings for case {i}.",
            metric=metric,
            score=3,
            comment=f"case {i}: negations are imprecise, sections drift",
            error_annotations=annotations,
        ))

    # stage 1 scripts: five suggestions per record, then the merge tree
    final_texts = []
    for subset in (records[:4], records[4:]):
        leaf_texts = []
        for record in subset:
            items = [f"{record.record_id}: suggestion {k}" for k in range(5)]
            register(backend, "abstract_v1", abstraction_slots(record, config), json.dumps(items))
            leaf_texts.extend(items)
        final_texts.extend(walk_tree_scripts(backend, leaf_texts, config.group_size))

    # stage 2 scripts: tips for the gated error, strategies per phase
    pool_stub = [type("U", (), {"text": t})() for t in final_texts]
    for phase in ALL_PHASES:
        tip_texts = [f"{phase.value}: handle vague negation, variant {k}" for k in range(5)]
        register(backend, "tips_v1", tips_slots(pool_stub, phase, "Vague Negation"),
                 json.dumps(tip_texts))
        tips = [Tip(phase, "Vague Negation", t) for t in tip_texts]
        register(backend, "strategy_v1", strategy_slots(tips, phase),
                 json.dumps([f"{phase.value}: prefer canonical negations",
                             f"{phase.value}: keep terminology consistent"]))

    print("building the experience book from 8 records...")
    book = build_book(records, config, backend)

    print(f"\nerror frequencies seen: {book.error_frequencies}")
    print(f"gate (min 2 records) admitted: {sorted({e for _, e in book.tips})}")
    for (phase, error_type), tips in sorted(book.tips.items(), key=lambda kv: str(kv[0])):
        print(f"\n[{phase.value} / {error_type}] {len(tips)} tips, e.g.")
        print(f"  - {tips[0].text}")
    for phase, strategies in book.strategies.items():
        print(f"\nstrategies for {phase.value}:")
        for strategy in strategies:
            print(f"  - {strategy.text}")


if __name__ == "__main__":
    main()
