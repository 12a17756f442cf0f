"""Run the detect / revise / self-critique loop on scripted replies.

The scripted critique scores 0.45, then 0.55, then 0.72, so the loop
re-revises twice before accepting. The printed trace shows every attempt.
"""

import json

from expweave import PipelineConfig, ScriptedBackend, run_pipeline
from expweave.backends import slot_digest
from expweave.pipeline import _findings_block, _prior_issues_block
from expweave.prompting import ordered_slots

REPORT = "Findings: no obvious abnormalities. Impression: unremarkable."


def register(backend, template_id, slots, reply):
    digest = slot_digest(template_id, ordered_slots(template_id, slots))
    backend.register_script(template_id, digest, reply)


def main():
    backend = ScriptedBackend()
    findings = [{"error_type": "Vague Negation",
                 "description": "negative findings use loose phrasing",
                 "excerpt": "no obvious abnormalities"}]
    register(backend, "detect_v1", {"report": REPORT, "context": ""}, json.dumps(findings))

    from expweave.pipeline import ErrorFinding
    parsed = [ErrorFinding(**f) for f in findings]
    scores = [0.45, 0.55, 0.72]
    prior = ()
    for round_number, score in enumerate(scores, start=1):
        revised = f"Revision {round_number}: Findings: no abnormal signs. Impression: unremarkable."
        register(backend, "revise_v1", {
            "report": REPORT,
            "findings": _findings_block(parsed),
            "context": "",
            "prior_issues": _prior_issues_block(prior),
        }, revised)
        issues = [f"round {round_number}: tighten the negation wording"]
        register(backend, "critique_v1",
                 {"original": REPORT, "revised": revised, "context": ""},
                 json.dumps({"score": score, "issues": issues, "strengths": ["concise"],
                             "recommendation": "accept" if score >= 0.6 else "revise",
                             "reasoning": "scripted demo critique"}))
        prior = tuple(issues)

    trace = run_pipeline(REPORT, None, PipelineConfig(), backend)

    print(f"original : {trace.original}")
    print(f"findings : {[f.error_type for f in trace.findings]}")
    for k, (revised, critique) in enumerate(trace.attempts, start=1):
        print(f"attempt {k}: score={critique.score:.2f} rec={critique.recommendation}")
        print(f"           {revised}")
    print(f"iterations={trace.iterations} accepted={trace.accepted}")
    print(f"final    : {trace.final}")


if __name__ == "__main__":
    main()
