"""Judge-reliability workflow on a synthetic score panel.

Plants known text and evaluator effects, fits the additive decomposition,
runs the hypothesis-test battery, computes the five per-evaluator
diagnostics, ranks the evaluators, and finds the cost/score frontier.
"""

from expweave import stats


def main():
    synth = stats.generate_synthetic_panel(
        n_evaluators=5, n_runs=3, n_texts=30,
        mu=3.2, gamma_sd=0.9, alpha_sd=0.25, noise_sd=0.5, seed=2024,
    )
    panel = synth.panel
    print(f"panel: {len(panel.evaluators)} evaluators x {len(panel.runs)} runs "
          f"x {len(panel.texts)} texts = {len(panel)} scores")

    decomp = stats.fit_effects(panel, "attr1")
    print(f"\nfitted grand mean: {decomp.mu:.3f} (planted {synth.planted.mu})")
    worst = max(decomp.alpha, key=lambda e: abs(decomp.alpha[e]))
    print(f"largest evaluator effect: {worst} at {decomp.alpha[worst]:+.3f}")

    print("\nhypothesis tests:")
    for report in stats.run_test_battery(panel, "attr1"):
        verdict = "reject" if report.reject_at_0_05 else "accept"
        print(f"  {report.test_name:<16} stat={report.statistic:>10.4f} "
              f"df={report.df:<12} p={report.p_value:.3g}  -> {verdict} H0")

    decomps = {a: stats.fit_effects(panel, a) for a in panel.attributes}
    metrics = stats.evaluator_metrics(panel, decomps)
    print("\nper-evaluator diagnostics:")
    for m in metrics:
        print(f"  {m.evaluator}: bias={m.bias:.3f} stability={m.stability:.4f} "
              f"precision={m.precision:.3f} skew={m.skewness:+.3f} entropy={m.entropy:.3f}")

    table = stats.rank_models(metrics)
    print("\nrank table (lower total = better):")
    for row in table.rows:
        print(f"  {row.evaluator}: {row.ranks} total={row.total}")

    # attach made-up per-call costs and look at the efficient frontier
    costs = {e: 0.5 + i * 0.7 for i, e in enumerate(panel.evaluators)}
    points = [(row.evaluator, costs[row.evaluator], -row.total) for row in table.rows]
    frontier = stats.cost_frontier(points)
    print(f"\ncost/quality frontier (cheapest first): {frontier}")


if __name__ == "__main__":
    main()
