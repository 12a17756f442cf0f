"""Judge-reliability statistics.

Fits the additive observation model

    score = mu + text_effect + evaluator_effect + run_effect + residual

under sum-to-zero constraints, runs the hypothesis-test battery over the
fitted effects and residuals, computes the five evaluator diagnostics, ranks
evaluators, and finds cost/score Pareto frontiers. Balanced panels use the
closed-form group-mean solution; incomplete panels fall back to a general
least-squares fit, and the two agree on balanced data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .errors import DegenerateDesign, EmptyInput, SchemaError
from .types import Dimension

LABEL_LEVELS = (1, 2, 3, 4, 5)
MAX_ENTROPY = math.log2(len(LABEL_LEVELS))

TEST_NAMES = (
    "text_mean",
    "text_variance",
    "rater_mean",
    "rater_variance",
    "run_bias",
    "run_stability",
    "run_trend",
    "residual_variance",
)


@dataclass(frozen=True)
class ScoreObservation:
    evaluator: str
    run: int
    text: str
    attribute: str
    value: float


class ScorePanel:
    """A deduplicated evaluator x run x text x attribute score grid.

    Range validation (scores within the 1-5 scale) applies to label-scale
    panels; synthetic continuous panels opt out.
    """

    def __init__(self, observations: Iterable[ScoreObservation], validate_range: bool = True):
        self.observations: tuple[ScoreObservation, ...] = tuple(observations)
        seen = set()
        for obs in self.observations:
            key = (obs.evaluator, obs.run, obs.text, obs.attribute)
            if key in seen:
                raise SchemaError(f"duplicate panel cell {key}")
            seen.add(key)
            if validate_range and not 1.0 <= obs.value <= 5.0:
                raise SchemaError(f"score {obs.value} outside [1,5] at cell {key}")
        self.evaluators = sorted({o.evaluator for o in self.observations})
        self.runs = sorted({o.run for o in self.observations})
        self.texts = sorted({o.text for o in self.observations})
        self.attributes = sorted({o.attribute for o in self.observations})

    def __len__(self) -> int:
        return len(self.observations)

    def for_attribute(self, attribute: str) -> list[ScoreObservation]:
        return [o for o in self.observations if o.attribute == attribute]

    @classmethod
    def from_judge_scores(cls, scores: Iterable) -> "ScorePanel":
        return cls(
            ScoreObservation(
                evaluator=s.evaluator_id,
                run=s.run_id,
                text=s.text_id,
                attribute=s.dimension.value if isinstance(s.dimension, Dimension) else str(s.dimension),
                value=float(s.label),
            )
            for s in scores
        )


def panel_to_csv(panel: ScorePanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluator", "run", "text", "attribute", "score"])
        for o in panel.observations:
            writer.writerow([o.evaluator, o.run, o.text, o.attribute, repr(o.value)])


def panel_from_csv(path, validate_range: bool = False) -> ScorePanel:
    observations = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"evaluator", "run", "text", "attribute", "score"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise SchemaError(f"{path}: panel CSV needs columns {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                observations.append(
                    ScoreObservation(
                        evaluator=row["evaluator"],
                        run=int(row["run"]),
                        text=row["text"],
                        attribute=row["attribute"],
                        value=float(row["score"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad panel row: {exc}") from exc
    return ScorePanel(observations, validate_range=validate_range)


@dataclass
class EffectDecomposition:
    """Fitted additive model for one attribute; effects sum to zero."""

    attribute: str
    mu: float
    gamma: dict[str, float]          # text effects
    alpha: dict[str, float]          # evaluator effects
    beta: dict[int, float]           # run effects
    residuals: dict[tuple[str, int, str], float]

    def reconstruct(self, evaluator: str, run: int, text: str) -> float:
        return (
            self.mu
            + self.gamma[text]
            + self.alpha[evaluator]
            + self.beta[run]
            + self.residuals[(evaluator, run, text)]
        )


@dataclass(frozen=True)
class TestReport:
    test_name: str
    statistic: float
    df: str
    p_value: float
    reject_at_0_05: bool

    def __post_init__(self):
        if self.test_name not in TEST_NAMES:
            raise ValueError(f"unknown test name {self.test_name!r}")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0,1]")


@dataclass(frozen=True)
class EvaluatorMetrics:
    evaluator: str
    bias: float
    stability: float
    precision: float
    skewness: float
    entropy: float
    skew_degenerate: bool = False

    def __post_init__(self):
        for name in ("bias", "stability", "precision"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not -1e-9 <= self.entropy <= MAX_ENTROPY + 1e-9:
            raise ValueError(f"entropy {self.entropy} outside [0, log2 5]")


@dataclass(frozen=True)
class RankRow:
    evaluator: str
    ranks: dict[str, int]
    total: int


@dataclass(frozen=True)
class RankTable:
    rows: tuple[RankRow, ...]

    def rank_of(self, evaluator: str, metric: str) -> int:
        for row in self.rows:
            if row.evaluator == evaluator:
                return row.ranks[metric]
        raise KeyError(evaluator)

    def total_of(self, evaluator: str) -> int:
        for row in self.rows:
            if row.evaluator == evaluator:
                return row.total
        raise KeyError(evaluator)


# --- model fitting ---


def _extract_arrays(cells: Sequence[ScoreObservation]):
    evaluators = sorted({c.evaluator for c in cells})
    runs = sorted({c.run for c in cells})
    texts = sorted({c.text for c in cells})
    e_index = {e: k for k, e in enumerate(evaluators)}
    j_index = {j: k for k, j in enumerate(runs)}
    t_index = {t: k for k, t in enumerate(texts)}
    ev = np.array([e_index[c.evaluator] for c in cells])
    rn = np.array([j_index[c.run] for c in cells])
    tx = np.array([t_index[c.text] for c in cells])
    y = np.array([c.value for c in cells], dtype=float)
    return evaluators, runs, texts, ev, rn, tx, y


def _is_balanced(ev, rn, tx, n_e, n_j, n_t) -> bool:
    if len(ev) != n_e * n_j * n_t:
        return False
    flat = (ev * n_j + rn) * n_t + tx
    return len(np.unique(flat)) == len(flat)


_FACTORS = ("text", "evaluator", "run")


def _fit_arrays(y, ev, rn, tx, n_e, n_j, n_t, include: Sequence[str]):
    """Least-squares fit of the chosen main effects under sum-to-zero coding.

    Returns (mu, effects dict factor->vector, residual vector). Balanced
    panels take the closed-form group-mean path; anything else goes through a
    dense design matrix.
    """
    factor_data = {"text": (tx, n_t), "evaluator": (ev, n_e), "run": (rn, n_j)}
    if _is_balanced(ev, rn, tx, n_e, n_j, n_t):
        mu = float(y.mean())
        effects = {}
        fitted = np.full_like(y, mu)
        for name in include:
            idx, levels = factor_data[name]
            sums = np.bincount(idx, weights=y, minlength=levels)
            counts = np.bincount(idx, minlength=levels)
            eff = sums / counts - mu
            effects[name] = eff
            fitted = fitted + eff[idx]
        return mu, effects, y - fitted

    columns = [np.ones(len(y))]
    spans: list[tuple[str, int, int]] = []
    for name in include:
        idx, levels = factor_data[name]
        start = len(columns)
        for m in range(levels - 1):
            col = (idx == m).astype(float) - (idx == levels - 1).astype(float)
            columns.append(col)
        spans.append((name, start, len(columns)))
    x = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    mu = float(coef[0])
    effects = {}
    for name, start, stop in spans:
        free = coef[start:stop]
        effects[name] = np.concatenate([free, [-free.sum()]])
    return mu, effects, y - x @ coef


def _model_params(n_e, n_j, n_t, include: Sequence[str]) -> int:
    sizes = {"text": n_t, "evaluator": n_e, "run": n_j}
    return 1 + sum(sizes[name] - 1 for name in include)


def _attribute_cells(panel: ScorePanel, attribute: str) -> list[ScoreObservation]:
    cells = panel.for_attribute(attribute)
    if not cells:
        raise DegenerateDesign(f"panel has no observations for attribute {attribute!r}")
    return cells


def fit_effects(panel: ScorePanel, attribute: str, method: str = "auto") -> EffectDecomposition:
    """Fit the additive model for one attribute.

    method "auto" picks the closed-form path on balanced panels; "lstsq"
    forces the general least-squares route (used to check the equivalence).
    """
    cells = _attribute_cells(panel, attribute)
    evaluators, runs, texts, ev, rn, tx, y = _extract_arrays(cells)
    if len(evaluators) < 2 or len(runs) < 2 or len(texts) < 2:
        raise DegenerateDesign(
            f"attribute {attribute!r} needs >=2 evaluators, runs, and texts "
            f"(got {len(evaluators)}, {len(runs)}, {len(texts)})"
        )
    if method == "lstsq":
        mu, effects, resid = _fit_lstsq_only(y, ev, rn, tx, len(evaluators), len(runs), len(texts))
    else:
        mu, effects, resid = _fit_arrays(
            y, ev, rn, tx, len(evaluators), len(runs), len(texts), _FACTORS
        )
    return EffectDecomposition(
        attribute=attribute,
        mu=mu,
        gamma={t: float(v) for t, v in zip(texts, effects["text"])},
        alpha={e: float(v) for e, v in zip(evaluators, effects["evaluator"])},
        beta={j: float(v) for j, v in zip(runs, effects["run"])},
        residuals={
            (c.evaluator, c.run, c.text): float(r) for c, r in zip(cells, resid)
        },
    )


def _fit_lstsq_only(y, ev, rn, tx, n_e, n_j, n_t):
    original = _is_balanced(ev, rn, tx, n_e, n_j, n_t)
    if not original:
        return _fit_arrays(y, ev, rn, tx, n_e, n_j, n_t, _FACTORS)
    # force the dense path by calling the builder directly
    factor_data = {"text": (tx, n_t), "evaluator": (ev, n_e), "run": (rn, n_j)}
    columns = [np.ones(len(y))]
    spans = []
    for name in _FACTORS:
        idx, levels = factor_data[name]
        start = len(columns)
        for m in range(levels - 1):
            columns.append((idx == m).astype(float) - (idx == levels - 1).astype(float))
        spans.append((name, start, len(columns)))
    x = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    effects = {}
    for name, start, stop in spans:
        free = coef[start:stop]
        effects[name] = np.concatenate([free, [-free.sum()]])
    return float(coef[0]), effects, y - x @ coef


# --- hypothesis tests ---


def _nested_f(panel: ScorePanel, attribute: str, dropped: str, name: str) -> TestReport:
    cells = _attribute_cells(panel, attribute)
    evaluators, runs, texts, ev, rn, tx, y = _extract_arrays(cells)
    n_e, n_j, n_t = len(evaluators), len(runs), len(texts)
    sizes = {"text": n_t, "evaluator": n_e, "run": n_j}
    if sizes[dropped] < 2:
        raise DegenerateDesign(f"factor {dropped!r} has a single level")
    if n_e < 2 or n_j < 2 or n_t < 2:
        raise DegenerateDesign("each factor needs at least two levels")
    n = len(y)
    df_full = n - _model_params(n_e, n_j, n_t, _FACTORS)
    if df_full < 1:
        raise DegenerateDesign("no residual degrees of freedom in the full model")
    _, _, resid_full = _fit_arrays(y, ev, rn, tx, n_e, n_j, n_t, _FACTORS)
    reduced = tuple(f for f in _FACTORS if f != dropped)
    _, _, resid_red = _fit_arrays(y, ev, rn, tx, n_e, n_j, n_t, reduced)
    sse_full = float(resid_full @ resid_full)
    sse_red = float(resid_red @ resid_red)
    delta_df = sizes[dropped] - 1
    if sse_full <= 0:
        statistic = math.inf if sse_red > sse_full else 0.0
        p = 0.0 if statistic > 0 else 1.0
    else:
        statistic = ((sse_red - sse_full) / delta_df) / (sse_full / df_full)
        p = float(sps.f.sf(statistic, delta_df, df_full))
    return TestReport(
        test_name=name,
        statistic=float(statistic),
        df=f"({delta_df}, {df_full})",
        p_value=p,
        reject_at_0_05=p < 0.05,
    )


def test_text_effect(decomp: EffectDecomposition, panel: ScorePanel) -> TestReport:
    """F-test of the text effects: are mean scores sensitive to the text?"""
    return _nested_f(panel, decomp.attribute, "text", "text_mean")


def test_rater_effect(decomp: EffectDecomposition, panel: ScorePanel) -> TestReport:
    """F-test of the evaluator effects: does the base model shift the mean?"""
    return _nested_f(panel, decomp.attribute, "evaluator", "rater_mean")


def test_run_bias(decomp) -> TestReport:
    """One-sample t-test of the fitted run effects against zero mean.

    Accepts an EffectDecomposition or any run -> effect mapping. Note the
    sum-to-zero fit makes the fitted effects average exactly zero, so on
    fitted decompositions this test cannot reject; feeding effect estimates
    referenced to a known baseline (e.g. planted synthetic truth) gives the
    test its nominal power.
    """
    beta = decomp.beta if isinstance(decomp, EffectDecomposition) else dict(decomp)
    values = np.array([beta[j] for j in sorted(beta)], dtype=float)
    if len(values) < 2:
        raise DegenerateDesign("run-bias t-test needs at least two runs")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    df = len(values) - 1
    if sd == 0.0:
        statistic = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        p = 1.0 if mean == 0.0 else 0.0
    else:
        statistic = mean / (sd / math.sqrt(len(values)))
        p = float(2.0 * sps.t.sf(abs(statistic), df))
    return TestReport(
        test_name="run_bias",
        statistic=statistic,
        df=str(df),
        p_value=p,
        reject_at_0_05=p < 0.05,
    )


def _norun_residual_groups(panel: ScorePanel, attribute: str):
    """Residuals of the model fitted WITHOUT the run factor, grouped by run."""
    cells = _attribute_cells(panel, attribute)
    evaluators, runs, texts, ev, rn, tx, y = _extract_arrays(cells)
    if len(runs) < 2:
        raise DegenerateDesign("need at least two runs")
    _, _, resid = _fit_arrays(
        y, ev, rn, tx, len(evaluators), len(runs), len(texts), ("text", "evaluator")
    )
    groups = [resid[rn == k] for k in range(len(runs))]
    return runs, groups, rn, resid


def test_run_stability(panel: ScorePanel, decomp: EffectDecomposition) -> TestReport:
    """One-way ANOVA: do residual means differ across runs?"""
    runs, groups, _, resid = _norun_residual_groups(panel, decomp.attribute)
    if any(len(g) < 2 for g in groups):
        raise DegenerateDesign("run-stability ANOVA needs >=2 residuals per run")
    n = sum(len(g) for g in groups)
    if np.ptp(resid) < 1e-10:  # residuals flat up to float dust (noiseless panel)
        statistic, p = 0.0, 1.0
    else:
        statistic, p = sps.f_oneway(*groups)
    return TestReport(
        test_name="run_stability",
        statistic=float(statistic),
        df=f"({len(runs) - 1}, {n - len(runs)})",
        p_value=float(p),
        reject_at_0_05=p < 0.05,
    )


def test_run_trend(panel: ScorePanel, decomp: EffectDecomposition) -> TestReport:
    """t-test of the OLS slope of residuals on run index (drift over runs)."""
    runs, groups, rn, resid = _norun_residual_groups(panel, decomp.attribute)
    if len(runs) < 3:
        raise DegenerateDesign("run-trend test needs at least three runs")
    df = len(resid) - 2
    x = rn.astype(float) + 1.0
    if np.ptp(resid) < 1e-10:
        statistic, p = 0.0, 1.0
    else:
        result = sps.linregress(x, resid)
        if result.stderr > 0:
            statistic, p = result.slope / result.stderr, float(result.pvalue)
        else:  # exact linear drift with no noise around it
            statistic = math.copysign(math.inf, result.slope) if result.slope else 0.0
            p = 0.0 if result.slope else 1.0
    return TestReport(
        test_name="run_trend",
        statistic=float(statistic),
        df=str(df),
        p_value=p,
        reject_at_0_05=p < 0.05,
    )


def levene_rater_variance(panel: ScorePanel, decomp: EffectDecomposition) -> TestReport:
    """Classic Levene test: equal residual variance across evaluators?"""
    cells = _attribute_cells(panel, decomp.attribute)
    groups_map: dict[str, list[float]] = {}
    for cell in cells:
        groups_map.setdefault(cell.evaluator, []).append(
            decomp.residuals[(cell.evaluator, cell.run, cell.text)]
        )
    if len(groups_map) < 2:
        raise DegenerateDesign("Levene test needs at least two evaluators")
    groups = [np.array(groups_map[e]) for e in sorted(groups_map)]
    if any(len(g) < 2 for g in groups):
        raise DegenerateDesign("Levene test needs >=2 residuals per evaluator")
    n = sum(len(g) for g in groups)
    if all(np.ptp(g) < 1e-10 for g in groups):
        statistic, p = 0.0, 1.0
    else:
        statistic, p = sps.levene(*groups, center="mean")
    return TestReport(
        test_name="rater_variance",
        statistic=float(statistic),
        df=f"({len(groups) - 1}, {n - len(groups)})",
        p_value=float(p),
        reject_at_0_05=p < 0.05,
    )


def run_test_battery(panel: ScorePanel, attribute: str) -> list[TestReport]:
    """Fit one attribute and run every applicable test on it."""
    decomp = fit_effects(panel, attribute)
    reports = [
        test_text_effect(decomp, panel),
        test_rater_effect(decomp, panel),
        test_run_bias(decomp),
        test_run_stability(panel, decomp),
    ]
    if len(panel.runs) >= 3:
        reports.append(test_run_trend(panel, decomp))
    reports.append(levene_rater_variance(panel, decomp))
    return reports


# --- evaluator diagnostics ---


def evaluator_metrics(
    panel: ScorePanel, decomps: Mapping[str, EffectDecomposition]
) -> list[EvaluatorMetrics]:
    """Five diagnostics per evaluator, pooled over attributes.

    bias: mean absolute fitted evaluator effect; stability: sample variance
    of the evaluator's own per-run effects; precision: SD of its residuals;
    skewness: adjusted sample skewness of its raw scores (0 with a flag when
    degenerate); entropy: base-2 entropy of its label distribution.
    """
    if not decomps:
        raise DegenerateDesign("need at least one fitted attribute")
    if len(panel.runs) < 2:
        raise DegenerateDesign("stability needs at least two runs")
    results = []
    for evaluator in panel.evaluators:
        own = [o for o in panel.observations if o.evaluator == evaluator]
        values = np.array([o.value for o in own], dtype=float)

        bias = float(np.mean([abs(d.alpha[evaluator]) for d in decomps.values()]))

        run_means = {
            j: values[[o.run == j for o in own]].mean() for j in sorted({o.run for o in own})
        }
        if len(run_means) < 2:
            raise DegenerateDesign(f"evaluator {evaluator!r} observed in fewer than two runs")
        own_beta = np.array(list(run_means.values())) - values.mean()
        stability = float(np.var(own_beta, ddof=1))

        resid = [
            r
            for d in decomps.values()
            for (e, _, _), r in d.residuals.items()
            if e == evaluator
        ]
        precision = float(np.std(np.array(resid), ddof=1)) if len(resid) > 1 else 0.0

        if np.ptp(values) == 0:
            skewness, degenerate = 0.0, True
        else:
            skewness, degenerate = float(sps.skew(values, bias=False)), False

        labels = np.clip(np.rint(values), 1, 5).astype(int)
        counts = np.bincount(labels, minlength=6)[1:6]
        p = counts / counts.sum()
        nonzero = p[p > 0]
        entropy = float(-(nonzero * np.log2(nonzero)).sum())

        results.append(
            EvaluatorMetrics(
                evaluator=evaluator,
                bias=bias,
                stability=stability,
                precision=precision,
                skewness=skewness,
                entropy=entropy,
                skew_degenerate=degenerate,
            )
        )
    return results


# --- ranking ---

# metric -> key function; every metric ranks ascending on its key
_RANK_KEYS = {
    "bias": lambda m: m.bias,
    "stability": lambda m: m.stability,
    "precision": lambda m: m.precision,
    "skewness": lambda m: abs(m.skewness),
    "entropy": lambda m: -m.entropy,
}


def _competition_ranks(values: Mapping[str, float]) -> dict[str, int]:
    """Ties share the minimum rank; next distinct value takes its position."""
    ordered = sorted(values.items(), key=lambda kv: kv[1])
    ranks: dict[str, int] = {}
    position = 0
    previous = None
    for offset, (name, value) in enumerate(ordered, start=1):
        if previous is None or value != previous:
            position = offset
            previous = value
        ranks[name] = position
    return ranks


def rank_models(metrics: Sequence[EvaluatorMetrics]) -> RankTable:
    """Rank evaluators per diagnostic and by total; lower is better everywhere.

    Skewness ranks by absolute value, entropy by descending value; ranks are
    competition-style, totals sort ascending with evaluator id as tiebreak.
    """
    if len(metrics) < 2:
        raise DegenerateDesign("ranking needs at least two evaluators")
    per_metric: dict[str, dict[str, int]] = {}
    for name, key in _RANK_KEYS.items():
        per_metric[name] = _competition_ranks({m.evaluator: key(m) for m in metrics})
    rows = []
    for m in metrics:
        ranks = {name: per_metric[name][m.evaluator] for name in _RANK_KEYS}
        rows.append(RankRow(evaluator=m.evaluator, ranks=ranks, total=sum(ranks.values())))
    rows.sort(key=lambda r: (r.total, r.evaluator))
    return RankTable(rows=tuple(rows))


# --- cost-performance frontier ---


def cost_frontier(points: Sequence[tuple[str, float, float]]) -> list[str]:
    """Pareto-efficient evaluators: nobody else is cheaper-or-equal AND
    better-or-equal with at least one strict inequality. Sorted by cost."""
    if not points:
        raise EmptyInput("cost_frontier needs at least one point")
    for name, cost, _ in points:
        if cost <= 0:
            raise ValueError(f"cost must be positive, got {cost} for {name!r}")
    frontier = []
    for name, cost, score in points:
        dominated = any(
            (other_cost <= cost and other_score >= score)
            and (other_cost < cost or other_score > score)
            for other_name, other_cost, other_score in points
            if other_name != name
        )
        if not dominated:
            frontier.append((cost, -score, name))
    frontier.sort()
    return [name for _, _, name in frontier]


# --- synthetic panels ---


@dataclass(frozen=True)
class PlantedEffects:
    mu: float
    gamma: dict[str, dict[str, float]]   # attribute -> text -> effect
    alpha: dict[str, dict[str, float]]   # attribute -> evaluator -> effect
    beta: dict[int, float]               # run -> effect (shared across attributes)
    noise_sd: float


@dataclass(frozen=True)
class SyntheticPanel:
    panel: ScorePanel
    planted: PlantedEffects


def generate_synthetic_panel(
    n_evaluators: int = 9,
    n_runs: int = 3,
    n_texts: int = 40,
    n_attributes: int = 1,
    mu: float = 3.0,
    gamma_sd: float = 0.0,
    alpha_sd: float = 0.0,
    beta_sd: float = 0.0,
    beta_shift: float = 0.0,
    noise_sd: float = 0.5,
    seed: int = 0,
    label_scale: bool = False,
) -> SyntheticPanel:
    """Balanced panel with planted effects, deterministic for a fixed seed.

    Drawn effect vectors are re-centered so the planted values satisfy the
    sum-to-zero constraints exactly; beta_shift then moves every run by a
    common amount (a run-level bias that a within-panel fit will absorb into
    mu). Continuous values by default; label_scale clamps and rounds to 1-5.
    """
    if min(n_evaluators, n_runs, n_texts) < 2 or n_attributes < 1:
        raise DegenerateDesign("panel dimensions must be >=2 per factor")
    rng = np.random.default_rng(seed)
    evaluators = [f"e{k:02d}" for k in range(1, n_evaluators + 1)]
    runs = list(range(1, n_runs + 1))
    texts = [f"t{k:03d}" for k in range(1, n_texts + 1)]
    attributes = [f"attr{k}" for k in range(1, n_attributes + 1)]

    def centered(sd: float, size: int) -> np.ndarray:
        if sd <= 0:
            return np.zeros(size)
        draw = rng.normal(0.0, sd, size)
        return draw - draw.mean()

    beta_vec = centered(beta_sd, n_runs) + beta_shift
    gamma: dict[str, dict[str, float]] = {}
    alpha: dict[str, dict[str, float]] = {}
    observations = []
    for attribute in attributes:
        gamma_vec = centered(gamma_sd, n_texts)
        alpha_vec = centered(alpha_sd, n_evaluators)
        gamma[attribute] = {t: float(v) for t, v in zip(texts, gamma_vec)}
        alpha[attribute] = {e: float(v) for e, v in zip(evaluators, alpha_vec)}
        noise = rng.normal(0.0, noise_sd, (n_evaluators, n_runs, n_texts)) if noise_sd > 0 else np.zeros((n_evaluators, n_runs, n_texts))
        for ei, evaluator in enumerate(evaluators):
            for ji, run in enumerate(runs):
                for ti, text in enumerate(texts):
                    value = mu + gamma_vec[ti] + alpha_vec[ei] + beta_vec[ji] + noise[ei, ji, ti]
                    if label_scale:
                        value = float(np.clip(np.rint(value), 1, 5))
                    observations.append(
                        ScoreObservation(evaluator, run, text, attribute, float(value))
                    )
    planted = PlantedEffects(
        mu=mu,
        gamma=gamma,
        alpha=alpha,
        beta={j: float(v) for j, v in zip(runs, beta_vec)},
        noise_sd=noise_sd,
    )
    return SyntheticPanel(
        panel=ScorePanel(observations, validate_range=label_scale), planted=planted
    )


def truth_referenced_run_effects(synth: SyntheticPanel) -> dict[int, float]:
    """Per-run mean deviation from the planted non-run structure.

    Unlike fitted sum-to-zero effects these retain any common run shift, so
    they carry real sampling variability for the run-bias t-test.
    """
    planted = synth.planted
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for o in synth.panel.observations:
        expected = planted.mu + planted.gamma[o.attribute][o.text] + planted.alpha[o.attribute][o.evaluator]
        sums[o.run] = sums.get(o.run, 0.0) + (o.value - expected)
        counts[o.run] = counts.get(o.run, 0) + 1
    return {j: sums[j] / counts[j] for j in sorted(sums)}
