"""Show layered retrieval: strategies first, then capped error-specific tips.

Builds a book in memory, renders the context a pipeline phase would see, and
demonstrates how the tips cap trades completeness against prompt size.
"""

from expweave import retrieve, render
from expweave.retriever import baseline_similar_records
from expweave.store import ExperienceBook, FeedbackRecord, Strategy, Tip
from expweave.types import Dimension, Phase


def build_demo_book() -> ExperienceBook:
    phase = Phase.SELF_CRITIQUE
    error = "Improper Terminology Usage"
    tips = [
        Tip(phase, error, "Replace colloquial phrases with their standardized clinical forms.",
            frozenset({"u1", "u2", "u3"})),
        Tip(phase, error, "Use one canonical term per concept through the whole report.",
            frozenset({"u1", "u2"})),
        Tip(phase, error, "Check negative findings against the preferred negation wording.",
            frozenset({"u2", "u3"})),
        Tip(phase, error, "Expand nonstandard abbreviations on first use.",
            frozenset({"u3"})),
        Tip(phase, error, "Keep units and laterality phrasing consistent with the template.",
            frozenset({"u1"})),
    ]
    strategies = [
        Strategy(phase, "Quality control leans on standardized terminology."),
        Strategy(phase, "Consistency beats variety: one term, one concept."),
    ]
    return ExperienceBook(
        tips={(phase, error): tips},
        strategies={phase: strategies},
        error_frequencies={error: 6},
        config_snapshot=(4, 4.0, 5),
    )


def main():
    book = build_demo_book()
    error = "Improper Terminology Usage"

    for cap in (1, 3, 5):
        context = retrieve(book, Phase.SELF_CRITIQUE, [error], cap)
        print(f"--- tips cap {cap} -> {context.total_tips} tips injected " + "-" * 20)
        print(render(context))

    # the naive similarity baseline, for contrast: raw records, no distillation
    memory = [
        FeedbackRecord("m1", "no obvious abnormalities in both lungs", "", Dimension.CORRECTNESS, 3, ""),
        FeedbackRecord("m2", "heart size and shape are normal", "", Dimension.CORRECTNESS, 4, ""),
        FeedbackRecord("m3", "costophrenic angles are sharp", "", Dimension.CORRECTNESS, 4, ""),
    ]
    query = "no obvious abnormal signs in both lungs"
    top = baseline_similar_records(memory, query, k=2)
    print("similarity baseline for:", query)
    for record in top:
        print(f"  {record.record_id}: {record.source_text}")


if __name__ == "__main__":
    main()
