"""Command-line surface.

Subcommands: weave, retrieve, pipeline, judge, detect-eval, stats, rank,
simulate, run, sweep. Every tabular output is CSV with a header row. The
scripted backend loads canned replies from a JSONL file of
{template_id, slot_digest, reply} objects; the live backend reads its bearer
token from the environment variable named in the config file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import harness, judge, pipeline, retriever, stats, store, weaver
from .backends import LiveBackend, ScriptedBackend
from .errors import ExpweaveError, UsageError
from .harness import RunConfig, load_runconfig
from .types import ALL_DIMENSIONS, Dimension, Phase


def _build_backend(args, config: RunConfig):
    if args.backend == "scripted":
        backend = ScriptedBackend()
        if getattr(args, "scripts", None):
            for lineno, line in enumerate(
                Path(args.scripts).read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                entry = json.loads(line)
                backend.register_script(
                    entry["template_id"], entry["slot_digest"], entry["reply"]
                )
        return backend
    if config.backend is None:
        raise UsageError("live backend requested but the config file has no backend section")
    return LiveBackend(config.backend)


def _load_config(args) -> RunConfig:
    config = load_runconfig(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config.split_seed = args.seed
    return config


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")


def _records_from(path) -> list[store.FeedbackRecord]:
    data = harness.ingest(path)
    if not data or not isinstance(data[0], store.FeedbackRecord):
        raise UsageError(f"{path}: expected a feedback-records file")
    return data


def _outcomes_from(path) -> list[judge.DetectionOutcome]:
    data = harness.ingest(path)
    if not data or not isinstance(data[0], judge.DetectionOutcome):
        raise UsageError(f"{path}: expected a detection-outcomes file")
    return data


# --- subcommands ---


def cmd_weave(args) -> int:
    config = _load_config(args)
    backend = _build_backend(args, config)
    records = _records_from(args.records)
    out = _out_dir(args)
    book = weaver.build_book(
        records,
        config.weave,
        backend,
        model_id=config.model_id,
        tips_cap=config.pipeline.tips_cap,
        pool_path=out / "pool.json",
    )
    store.save_book(book, out / "book.json")
    print(f"wrote {out / 'pool.json'} and {out / 'book.json'}")
    print(f"tips for {len(book.tips)} (phase, error) keys; strategies for {len(book.strategies)} phases")
    return 0


def cmd_retrieve(args) -> int:
    book = store.load_book(args.book)
    errors = [e for e in (args.errors or "").split(",") if e]
    context = retriever.retrieve(book, Phase(args.phase), errors, args.tips_cap)
    sys.stdout.write(retriever.render(context))
    return 0


def cmd_pipeline(args) -> int:
    config = _load_config(args)
    backend = _build_backend(args, config)
    book = store.load_book(args.book) if args.book else None
    text = Path(args.text).read_text(encoding="utf-8")
    trace = pipeline.run_pipeline(
        text, book, config.pipeline, backend, model_id=config.model_id
    )
    payload = json.dumps(trace.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)
    if args.out:
        out = _out_dir(args) / "trace.json"
        out.write_text(payload + "\n", encoding="utf-8")
        print(f"wrote {out}")
    else:
        print(payload)
    return 0


def cmd_judge(args) -> int:
    config = _load_config(args)
    backend = _build_backend(args, config)
    subject = json.loads(Path(args.subject).read_text(encoding="utf-8"))
    text_id = subject.pop("text_id", "")
    score = judge.judge_score(
        subject, Dimension(args.dimension), args.evaluator, args.run, backend, text_id=text_id
    )
    print(json.dumps({"label": score.label, "reasoning": score.reasoning}, ensure_ascii=False))
    return 0


def cmd_detect_eval(args) -> int:
    outcomes = _outcomes_from(args.outcomes)
    accuracy, macro_p, macro_r = judge.detection_metrics(outcomes)
    header = ["model", "tau", "accuracy", "macro_p", "macro_r"]
    row = [
        args.model,
        str(args.tau),
        format(accuracy, ".6f"),
        format(macro_p, ".6f"),
        format(macro_r, ".6f"),
    ]
    if args.out:
        _write_csv(_out_dir(args) / "detection_metrics.csv", header, [row])
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerow(row)
    return 0


def cmd_stats(args) -> int:
    panel = stats.panel_from_csv(args.panel)
    header = ["attribute", "test", "statistic", "df", "p_value", "reject_at_0.05"]
    rows = []
    for attribute in panel.attributes:
        for report in stats.run_test_battery(panel, attribute):
            rows.append([
                attribute,
                report.test_name,
                format(report.statistic, ".6g"),
                report.df,
                format(report.p_value, ".6g"),
                "yes" if report.reject_at_0_05 else "no",
            ])
    if not rows:
        raise UsageError(f"{args.panel}: panel holds no attributes to test")
    name_width = max(len(r[1]) for r in rows)
    table_lines = [
        f"{row[0]:<14} {row[1]:<{name_width}} stat={row[2]:>12} df={row[3]:<12} p={row[4]:>12} reject={row[5]}"
        for row in rows
    ]
    print("\n".join(table_lines))
    if args.out:
        out = _out_dir(args)
        _write_csv(out / "test_reports.csv", header, rows)
        (out / "test_reports.txt").write_text("\n".join(table_lines) + "\n", encoding="utf-8")
    return 0


def cmd_rank(args) -> int:
    if args.metrics:
        metrics = []
        with open(args.metrics, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                metrics.append(
                    stats.EvaluatorMetrics(
                        evaluator=row["evaluator"],
                        bias=float(row["bias"]),
                        stability=float(row["stability"]),
                        precision=float(row["precision"]),
                        skewness=float(row["skewness"]),
                        entropy=float(row["entropy"]),
                    )
                )
    else:
        panel = stats.panel_from_csv(args.panel)
        decomps = {a: stats.fit_effects(panel, a) for a in panel.attributes}
        metrics = stats.evaluator_metrics(panel, decomps)
    table = stats.rank_models(metrics)
    header = ["evaluator", "bias", "stability", "precision", "skewness", "entropy", "total"]
    rows = [
        [row.evaluator] + [str(row.ranks[m]) for m in ("bias", "stability", "precision", "skewness", "entropy")] + [str(row.total)]
        for row in table.rows
    ]
    writer = csv.writer(sys.stdout)
    writer.writerow(header)
    writer.writerows(rows)
    if args.out:
        out = _out_dir(args)
        _write_csv(out / "rank_table.csv", header, rows)
        width = max(len(r[0]) for r in rows)
        lines = [f"{'evaluator':<{width}}  bias stab prec skew entr total"]
        lines += [
            f"{r[0]:<{width}}  {r[1]:>4} {r[2]:>4} {r[3]:>4} {r[4]:>4} {r[5]:>4} {r[6]:>5}"
            for r in rows
        ]
        (out / "rank_table.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {out / 'rank_table.txt'}")
    return 0


def cmd_simulate(args) -> int:
    synth = stats.generate_synthetic_panel(
        n_evaluators=args.evaluators,
        n_runs=args.runs,
        n_texts=args.texts,
        n_attributes=args.attributes,
        mu=args.mu,
        gamma_sd=args.gamma_sd,
        alpha_sd=args.alpha_sd,
        beta_sd=args.beta_sd,
        noise_sd=args.noise_sd,
        seed=args.seed if args.seed is not None else 0,
        label_scale=args.label_scale,
    )
    out = _out_dir(args)
    stats.panel_to_csv(synth.panel, out / "panel.csv")
    planted = {
        "mu": synth.planted.mu,
        "gamma": synth.planted.gamma,
        "alpha": synth.planted.alpha,
        "beta": {str(k): v for k, v in synth.planted.beta.items()},
        "noise_sd": synth.planted.noise_sd,
    }
    (out / "planted.json").write_text(
        json.dumps(planted, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {out / 'panel.csv'} and {out / 'planted.json'}")
    return 0


def cmd_run(args) -> int:
    config = _load_config(args)
    backend = _build_backend(args, config)
    records = _records_from(args.records)
    out = _out_dir(args)
    progress = out / f"progress_{args.variant}.jsonl" if args.out else None
    report = harness.run_experiment(config, records, args.variant, backend, progress_path=progress)
    _write_csv(out / f"report_{args.variant}.csv", harness.REPORT_CSV_HEADER, report.csv_rows())
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    backend = _build_backend(args, config)
    records = _records_from(args.records)
    values = [float(v) for v in args.values.split(",") if v]
    results = harness.sweep(config, records, args.axis, values, backend)
    header = ["axis", "value"] + harness.REPORT_CSV_HEADER
    rows = []
    for value, report in results:
        for report_row in report.csv_rows():
            rows.append([args.axis, format(value, "g")] + report_row)
    _write_csv(_out_dir(args) / f"sweep_{args.axis}.csv", header, rows)
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expweave",
        description="Experience weaving, agent revision loop, and judge-reliability statistics.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file mirroring the run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the split seed")
    common.add_argument("--backend", choices=["live", "scripted"], default="scripted")
    common.add_argument("--scripts", help="JSONL of scripted replies (scripted backend)")
    common.add_argument("--out", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weave", parents=[common], help="build the experience book from records")
    p.add_argument("--records", required=True)
    p.set_defaults(func=cmd_weave)

    p = sub.add_parser("retrieve", parents=[common], help="print a rendered retrieval context")
    p.add_argument("--book", required=True)
    p.add_argument("--phase", choices=[ph.value for ph in Phase], required=True)
    p.add_argument("--errors", default="", help="comma-separated error types")
    p.add_argument("--tips-cap", type=int, default=5)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("pipeline", parents=[common], help="run the revision loop on one text")
    p.add_argument("--text", required=True, help="file holding the text to improve")
    p.add_argument("--book", help="experience book to inject")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("judge", parents=[common], help="score one subject on one dimension")
    p.add_argument("--dimension", choices=[d.value for d in ALL_DIMENSIONS], required=True)
    p.add_argument("--subject", required=True, help="JSON file with the prompt slot values")
    p.add_argument("--evaluator", default="default")
    p.add_argument("--run", type=int, default=1)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("detect-eval", parents=[common], help="detection metrics from outcomes")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--model", default="unknown", help="label for the CSV model column")
    p.add_argument("--tau", type=int, default=0, help="label for the CSV tau column")
    p.set_defaults(func=cmd_detect_eval)

    p = sub.add_parser("stats", parents=[common], help="fit the score model and run all tests")
    p.add_argument("--panel", required=True, help="panel CSV (evaluator,run,text,attribute,score)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("rank", parents=[common], help="rank evaluators by the five diagnostics")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--metrics", help="CSV of per-evaluator diagnostics")
    group.add_argument("--panel", help="panel CSV to compute diagnostics from")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic panel CSV")
    p.add_argument("--evaluators", type=int, default=9)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--texts", type=int, default=40)
    p.add_argument("--attributes", type=int, default=1)
    p.add_argument("--mu", type=float, default=3.0)
    p.add_argument("--gamma-sd", type=float, default=0.0)
    p.add_argument("--alpha-sd", type=float, default=0.0)
    p.add_argument("--beta-sd", type=float, default=0.0)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--label-scale", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", parents=[common], help="run one experiment variant")
    p.add_argument("--records", required=True)
    p.add_argument("--variant", choices=harness.VARIANTS, required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="sweep one hyperparameter axis")
    p.add_argument("--records", required=True)
    p.add_argument("--axis", choices=harness.SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExpweaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
