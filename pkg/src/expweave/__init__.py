"""expweave: experience weaving for text-revision agents.

Distills multi-dimensional revision feedback into a layered experience book
(error-specific tips under per-phase strategies), injects it into a
detect / revise / self-critique loop over a pluggable completion backend, and
validates LLM judges with an additive effect decomposition, a hypothesis-test
battery, per-evaluator diagnostics, and rank aggregation.
"""

from .backends import (
    Backend,
    BackendConfig,
    ChatRequest,
    ChatResponse,
    LiveBackend,
    ScriptedBackend,
    complete,
    slot_digest,
)
from .harness import (
    ExperimentReport,
    RunConfig,
    ingest,
    run_experiment,
    split,
    sweep,
)
from .judge import (
    DetectionOutcome,
    JudgeScore,
    detection_metrics,
    judge_score,
    pairwise_diff,
    select_training_cases,
)
from .pipeline import (
    CritiqueResult,
    ErrorFinding,
    PipelineConfig,
    RevisionTrace,
    detect_errors,
    revise,
    run_pipeline,
    self_critique,
)
from .retriever import (
    RetrievalContext,
    baseline_similar_records,
    render,
    retrieve,
)
from .stats import (
    EffectDecomposition,
    EvaluatorMetrics,
    RankTable,
    ScoreObservation,
    ScorePanel,
    TestReport,
    cost_frontier,
    evaluator_metrics,
    fit_effects,
    generate_synthetic_panel,
    levene_rater_variance,
    rank_models,
    test_rater_effect,
    test_run_bias,
    test_run_stability,
    test_run_trend,
    test_text_effect,
)
from .store import (
    ExperienceBook,
    ExperienceUnit,
    FeedbackRecord,
    Strategy,
    Tip,
    load_book,
    load_pool,
    save_book,
    save_pool,
)
from .types import ALL_DIMENSIONS, ALL_PHASES, Dimension, MetricName, Phase
from .weaver import (
    WeaveConfig,
    abstract_record,
    build_book,
    count_error_frequencies,
    distill_strategies,
    distill_tips,
    select_errors,
    weave_tree,
)

__version__ = "0.1.0"
