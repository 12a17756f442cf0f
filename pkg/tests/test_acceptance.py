"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances are pinned here, not configurable.
"""

from __future__ import annotations

import json
import math
import random
import time
from pathlib import Path

import pytest

from expweave import stats as rs
from expweave.backends import ScriptedBackend
from expweave.harness import ExperimentReport, REPORT_CSV_HEADER
from expweave.judge import DetectionOutcome, detection_metrics
from expweave.pipeline import PipelineConfig, run_pipeline
from expweave.retriever import render_for, retrieve
from expweave.stats import (
    EvaluatorMetrics,
    MAX_ENTROPY,
    fit_effects,
    generate_synthetic_panel,
    rank_models,
    truth_referenced_run_effects,
)
from expweave.store import load_book, save_book
from expweave.types import ALL_PHASES, Dimension
from expweave.weaver import WeaveConfig, abstract_record, build_book, select_errors, weave_tree

from conftest import (
    leaf_unit,
    make_record,
    script_abstraction,
    script_strategies,
    script_tips,
    script_tree,
)
from test_judge import brute_force_metrics
from test_pipeline import TEXT, script_loop
from test_retriever import TERMINOLOGY, golden_book
from test_stats import group_mean_oracle

FIXTURES = Path(__file__).parent / "fixtures"


def _pass(line: str) -> None:
    print(f"\nPASS {line}")


# --- criterion 1: rank reproduction -----------------------------------------

# Published per-evaluator diagnostics (bias, stability, precision, skewness,
# entropy) and the rank table they produce.
REFERENCE_METRICS = {
    "Deepseek": (0.239, 0.011, 0.706, 1.112, 1.923),
    "Claude-4.5": (0.188, 0.004, 1.083, 0.484, 2.168),
    "Gemini-3Pro": (0.176, 0.003, 0.946, 0.743, 1.957),
    "GLM-Flash": (0.070, 0.005, 0.881, 0.736, 2.021),
    "GPT-5 mini": (0.114, 0.003, 0.752, 0.513, 2.081),
    "GPT-5.1": (0.183, 0.005, 0.890, 0.771, 2.050),
    "Grok-4": (0.244, 0.087, 0.796, 0.783, 2.073),
    "Mistral": (0.059, 0.005, 0.676, 0.589, 2.183),
    "Qwen 2.5 7B": (0.878, 0.087, 0.696, 0.013, 1.932),
}

REFERENCE_RANKS = {
    "Mistral": (1, 4, 1, 4, 1),
    "GPT-5 mini": (3, 1, 4, 3, 3),
    "Claude-4.5": (6, 3, 9, 2, 2),
    "GLM-Flash": (2, 4, 6, 5, 6),
    "Gemini-3Pro": (4, 2, 8, 6, 7),
    "GPT-5.1": (5, 4, 7, 7, 5),
    "Qwen 2.5 7B": (9, 8, 2, 1, 8),
    "Grok-4": (8, 8, 5, 8, 4),
    "Deepseek": (7, 7, 3, 9, 9),
}

METRIC_COLUMNS = ("bias", "stability", "precision", "skewness", "entropy")


def _reference_metric_objects() -> list[EvaluatorMetrics]:
    return [
        EvaluatorMetrics(evaluator=name, bias=v[0], stability=v[1], precision=v[2],
                         skewness=v[3], entropy=v[4])
        for name, v in REFERENCE_METRICS.items()
    ]


def test_criterion_1_rank_reproduction():
    start = time.monotonic()
    table = rank_models(_reference_metric_objects())

    rank_keys = {
        "bias": lambda v: v[0],
        "stability": lambda v: v[1],
        "precision": lambda v: v[2],
        "skewness": lambda v: abs(v[3]),
        "entropy": lambda v: -v[4],
    }
    for column_index, column in enumerate(METRIC_COLUMNS):
        key = rank_keys[column]
        # group published values; ties are compared tie-tolerantly
        by_value: dict[float, list[str]] = {}
        for name, values in REFERENCE_METRICS.items():
            by_value.setdefault(key(values), []).append(name)
        position = 1
        for value in sorted(by_value):
            group = by_value[value]
            span = range(position, position + len(group))
            for name in group:
                ours = table.rank_of(name, column)
                published = REFERENCE_RANKS[name][column_index]
                if len(group) == 1:
                    assert ours == published, (column, name)
                else:
                    # tied group: competition semantics on our side, and the
                    # published rank must land inside the group's span
                    assert ours == position, (column, name)
                    assert published in span, (column, name)
            position += len(group)

    assert table.total_of("Mistral") == 11
    assert table.total_of("GPT-5 mini") == 14
    top_two = {table.rows[0].evaluator, table.rows[1].evaluator}
    assert top_two == {"Mistral", "GPT-5 mini"}
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    _pass(f"criterion 1: rank table reproduced (totals 11/14, top two) in {elapsed:.3f}s")


# --- criterion 2: entropy bound ----------------------------------------------


def test_criterion_2_entropy_bound():
    uniform = -sum(0.2 * math.log2(0.2) for _ in range(5))
    assert abs(uniform - MAX_ENTROPY) < 1e-9
    assert abs(MAX_ENTROPY - 2.321928094887362) < 1e-9
    # ingest sanity check: every reference entropy admits, above-bound rejects
    for name, values in REFERENCE_METRICS.items():
        EvaluatorMetrics(evaluator=name, bias=values[0], stability=values[1],
                         precision=values[2], skewness=values[3], entropy=values[4])
        assert values[4] <= MAX_ENTROPY
    with pytest.raises(ValueError):
        EvaluatorMetrics(evaluator="x", bias=0, stability=0, precision=0,
                         skewness=0, entropy=2.4)
    _pass("criterion 2: uniform entropy = log2 5 within 1e-9; bound enforced on ingest")


# --- criterion 3: effect recovery ---------------------------------------------


def test_criterion_3_effect_recovery():
    start = time.monotonic()
    # noiseless panel: exact recovery of the planted effects
    exact = generate_synthetic_panel(gamma_sd=1.0, alpha_sd=0.5, beta_sd=0.2,
                                     noise_sd=0.0, seed=100)
    decomp = fit_effects(exact.panel, "attr1")
    assert abs(decomp.mu - exact.planted.mu) < 1e-9
    for t, v in exact.planted.gamma["attr1"].items():
        assert abs(decomp.gamma[t] - v) < 1e-9
    for e, v in exact.planted.alpha["attr1"].items():
        assert abs(decomp.alpha[e] - v) < 1e-9
    for j, v in exact.planted.beta.items():
        assert abs(decomp.beta[j] - v) < 1e-9

    # noisy balanced panels at the validation shape: match the group-mean oracle
    for seed in range(5):
        synth = generate_synthetic_panel(n_evaluators=9, n_runs=3, n_texts=40,
                                         gamma_sd=0.8, alpha_sd=0.3, beta_sd=0.1,
                                         noise_sd=0.5, seed=200 + seed)
        fitted = fit_effects(synth.panel, "attr1")
        grand, gamma, alpha, beta = group_mean_oracle(synth.panel, "attr1")
        assert abs(fitted.mu - grand) < 1e-9
        assert all(abs(fitted.gamma[t] - gamma[t]) < 1e-9 for t in gamma)
        assert all(abs(fitted.alpha[e] - alpha[e]) < 1e-9 for e in alpha)
        assert all(abs(fitted.beta[j] - beta[j]) < 1e-9 for j in beta)
        for o in synth.panel.observations:
            assert abs(fitted.reconstruct(o.evaluator, o.run, o.text) - o.value) < 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    _pass(f"criterion 3: effects match the group-mean oracle to 1e-9 in {elapsed:.2f}s")


# --- criterion 4: test calibration ---------------------------------------------


def test_criterion_4_calibration():
    start = time.monotonic()
    n_sims = 1000
    rejections = {name: 0 for name in
                  ("run_bias", "text_mean", "rater_mean", "run_stability",
                   "run_trend", "rater_variance")}
    for seed in range(n_sims):
        synth = generate_synthetic_panel(n_evaluators=9, n_runs=3, n_texts=40,
                                         noise_sd=0.5, seed=seed)
        decomp = fit_effects(synth.panel, "attr1")
        rejections["text_mean"] += rs.test_text_effect(decomp, synth.panel).reject_at_0_05
        rejections["rater_mean"] += rs.test_rater_effect(decomp, synth.panel).reject_at_0_05
        # run-bias calibration uses run effects referenced to the planted
        # truth; the sum-to-zero fitted effects are degenerate by construction
        rejections["run_bias"] += rs.test_run_bias(
            truth_referenced_run_effects(synth)
        ).reject_at_0_05
        rejections["run_stability"] += rs.test_run_stability(synth.panel, decomp).reject_at_0_05
        rejections["run_trend"] += rs.test_run_trend(synth.panel, decomp).reject_at_0_05
        rejections["rater_variance"] += rs.levene_rater_variance(synth.panel, decomp).reject_at_0_05
    rates = {name: count / n_sims for name, count in rejections.items()}
    for name, rate in rates.items():
        assert 0.03 <= rate <= 0.07, f"{name} null rejection rate {rate}"

    # planted text effect: decisive rejection, and the qualitative pattern
    planted = generate_synthetic_panel(n_evaluators=9, n_runs=3, n_texts=40,
                                       gamma_sd=1.0, alpha_sd=0.5, noise_sd=0.5, seed=77)
    decomp = fit_effects(planted.panel, "attr1")
    text_report = rs.test_text_effect(decomp, planted.panel)
    rater_report = rs.test_rater_effect(decomp, planted.panel)
    bias_report = rs.test_run_bias(decomp)
    assert text_report.p_value < 1e-6 and text_report.reject_at_0_05
    assert rater_report.reject_at_0_05
    assert not bias_report.reject_at_0_05  # text/rater reject, run bias accepts
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    _pass(
        "criterion 4: null rates "
        + ", ".join(f"{k}={v:.3f}" for k, v in rates.items())
        + f"; planted text p={text_report.p_value:.2e}; {elapsed:.1f}s"
    )


# --- criterion 5: weaving structure ---------------------------------------------

ERROR_PLAN = {"Common": 15, "Borderline": 10, "Rare": 3}


def _hundred_record_fixture(backend, config):
    """100 records over 4 metrics with abstraction replies of 5-8 items."""
    records = []
    sizes = (5, 6, 7, 8)
    metrics = list(Dimension)
    annotated = {name: set(random.Random(name).sample(range(100), count))
                 for name, count in ERROR_PLAN.items()}
    per_metric_texts: dict[Dimension, list[str]] = {m: [] for m in metrics}
    for i in range(100):
        metric = metrics[i % 4]
        annotations = tuple(
            (name, "seen here") for name, members in sorted(annotated.items()) if i in members
        )
        record = make_record(f"r{i:03d}", metric=metric, annotations=annotations,
                             comment=f"feedback body {i}")
        records.append(record)
        items = [f"{record.record_id} exp{k}" for k in range(sizes[i % 4])]
        script_abstraction(backend, record, config, items)
        per_metric_texts[metric].extend(items)
    finals: dict[Dimension, list[str]] = {}
    for metric in metrics:
        finals[metric] = script_tree(backend, per_metric_texts[metric], config.group_size)
    return records, finals


def test_criterion_5_weaving_structure(tmp_path):
    config = WeaveConfig(group_size=4, min_error_freq=4)
    backend = ScriptedBackend()
    records, finals = _hundred_record_fixture(backend, config)

    # every abstraction emits 5-8 leaves
    for record in records:
        units = abstract_record(record, record.metric, backend, config)
        assert 5 <= len(units) <= 8
        assert all(u.provenance == {record.record_id} for u in units)

    # gate: count mode selects Common and Borderline; fraction mode only Common
    freqs = {name: count for name, count in ERROR_PLAN.items()}
    assert select_errors(freqs, 100, 4) == {"Common", "Borderline"}
    assert select_errors(freqs, 100, 0.1) == {"Common"}

    # scripted stage 2 for both gate modes
    final_pool = [leaf_unit(f"f{i}", text, "rX")
                  for i, text in enumerate(t for m in Dimension for t in finals[m])]
    for phase in ALL_PHASES:
        tips_by_error = {}
        for error_type in ("Borderline", "Common"):
            texts = [f"{phase.value} {error_type} tip{k}" for k in range(5)]
            script_tips(backend, final_pool, phase, error_type, texts)
            tips_by_error[error_type] = texts
        from expweave.store import Tip
        both = [Tip(phase, e, t) for e in ("Borderline", "Common") for t in tips_by_error[e]]
        only_common = [Tip(phase, "Common", t) for t in tips_by_error["Common"]]
        script_strategies(backend, both, phase, [f"{phase.value} strat{k}" for k in range(2)])
        script_strategies(backend, only_common, phase, [f"{phase.value} strat{k}" for k in range(2)])

    count_book = build_book(records, config, backend, pool_path=tmp_path / "pool.json")
    assert {e for _, e in count_book.tips} == {"Common", "Borderline"}
    fraction_book = build_book(
        records, WeaveConfig(group_size=4, min_error_freq=0.1), backend
    )
    assert {e for _, e in fraction_book.tips} == {"Common"}

    # book round-trips byte-identically
    a, b = tmp_path / "book_a.json", tmp_path / "book_b.json"
    save_book(count_book, a)
    save_book(load_book(a), b)
    assert a.read_bytes() == b.read_bytes()

    # tree property over 200 random sizes and group sizes 2-8
    rng = random.Random(555)
    for case in range(200):
        n = rng.randint(1, 60)
        group_size = rng.randint(2, 8)
        tree_backend = ScriptedBackend()
        units = [leaf_unit(f"c{case}.{i}", f"case {case} text {i}", f"rec{i}")
                 for i in range(n)]
        script_tree(tree_backend, [u.text for u in units], group_size)
        out = weave_tree(units, WeaveConfig(group_size=group_size), tree_backend)
        assert len(out) < group_size
        union = frozenset().union(*(u.provenance for u in out))
        assert union == frozenset(f"rec{i}" for i in range(n))
        total_ids = sum(len(u.provenance) for u in out)
        assert total_ids == n  # no record id lost or duplicated across roots
    _pass("criterion 5: abstraction bounds, gate modes, provenance over 200 trees, "
          "byte-identical book round-trip")


# --- criterion 6: critique loop -------------------------------------------------


def test_criterion_6_critique_loop():
    config = PipelineConfig()

    backend = ScriptedBackend()
    script_loop(backend, TEXT, [0.9])
    trace = run_pipeline(TEXT, None, config, backend)
    assert (trace.iterations, trace.accepted) == (1, True)
    assert trace.final == trace.attempts[0][0]

    backend = ScriptedBackend()
    script_loop(backend, TEXT, [0.4, 0.5, 0.7])
    trace = run_pipeline(TEXT, None, config, backend)
    assert (trace.iterations, trace.accepted) == (3, True)
    assert trace.final == trace.attempts[2][0]

    backend = ScriptedBackend()
    script_loop(backend, TEXT, [0.4, 0.5, 0.55])
    trace = run_pipeline(TEXT, None, config, backend)
    assert (trace.iterations, trace.accepted) == (3, False)
    best = max(range(3), key=lambda i: (trace.attempts[i][1].score, i))
    assert trace.final == trace.attempts[best][0]

    backend = ScriptedBackend()
    script_loop(backend, TEXT, [0.6])
    trace = run_pipeline(TEXT, None, config, backend)
    assert (trace.iterations, trace.accepted) == (1, True)  # exactly 0.6 halts

    rng = random.Random(31337)
    for _ in range(1000):
        scores = [round(rng.random(), 3) for _ in range(rng.randint(1, 6))]
        backend = ScriptedBackend()
        script_loop(backend, TEXT, scores[:3] + [0.0] * 3)
        trace = run_pipeline(TEXT, None, config, backend)
        assert trace.iterations <= 3
    _pass("criterion 6: scripted sequences, 0.6 halt, loop bound over 1000 random sequences")


# --- criterion 7: retrieval rendering --------------------------------------------


def test_criterion_7_retrieval_rendering():
    from expweave.types import Phase

    book = golden_book()
    rendered = render_for(book, Phase.SELF_CRITIQUE, [TERMINOLOGY], 3)
    golden = (FIXTURES / "retrieval_selfcritique_golden.txt").read_text(encoding="utf-8")
    assert rendered == golden
    assert "=== Strategy for Quality Control ===" in rendered
    assert "=== Detailed Tips (Retrieved 3 tips from Layer 2) ===" in rendered

    # per-error cap and monotone growth in the cap
    previous: list[str] = []
    for cap in range(1, 7):
        context = retrieve(book, Phase.SELF_CRITIQUE, [TERMINOLOGY], cap)
        tips = [t.text for t in context.tips_by_error[TERMINOLOGY]]
        assert len(tips) <= cap
        assert tips[: len(previous)] == previous
        previous = tips
    _pass("criterion 7: golden rendering byte-exact; cap and monotone properties hold")


# --- criterion 8: detection metrics ----------------------------------------------


def test_criterion_8_detection_metrics():
    outcomes = [
        DetectionOutcome("c1", "A", "A"),
        DetectionOutcome("c2", "A", "B"),
        DetectionOutcome("c3", "B", "B"),
    ]
    accuracy, macro_p, macro_r = detection_metrics(outcomes)
    assert accuracy == pytest.approx(2 / 3, abs=1e-12)
    assert macro_p == pytest.approx(3 / 4, abs=1e-12)
    assert macro_r == pytest.approx(3 / 4, abs=1e-12)

    rng = random.Random(88)
    for _ in range(500):
        n_classes = rng.randint(1, 6)
        labels = [f"L{k}" for k in range(n_classes)]
        batch = [
            DetectionOutcome(f"c{i}", rng.choice(labels), rng.choice(labels))
            for i in range(rng.randint(1, 50))
        ]
        assert detection_metrics(batch) == pytest.approx(brute_force_metrics(batch), abs=1e-12)
    _pass("criterion 8: equals brute-force confusion oracle on 500 instances; hand case exact")


# --- criterion 9: non-reproducible results stated ---------------------------------


def test_criterion_9_nonreproduction_statement():
    readme = (Path(__file__).parent.parent / "README.md").read_text(encoding="utf-8")
    assert "not reproduced" in readme.lower()
    assert "scripted" in readme.lower()
    # the harness report layout matches the published comparison table shape
    report = ExperimentReport(
        dataset="demo", variant="inject_total", evaluator="judge-1", count=1,
        overall_mean=0.0, per_dimension={"Readability": (0.0, 1)},
    )
    assert REPORT_CSV_HEADER == ["dataset", "variant", "evaluator", "dimension", "mean_diff", "count"]
    assert report.csv_rows()[0][:4] == ["demo", "inject_total", "judge-1", "Overall"]
    _pass("criterion 9: non-reproduction documented; report layout matches the comparison shape")
