"""Command-line entry point: ``sqlfim <subcommand> ...``.

Pipeline stages exchange files only::

    sqlfim curate   --in raw.jsonl --cell-target 50 --seed 1 --out corpus.jsonl
    sqlfim genbench --corpus corpus.jsonl --per-cell 10 --seed 1 --out bench.jsonl
    sqlfim eval     --bench bench.jsonl --provider replay --replay answers.jsonl --out report.json
    sqlfim report   --scores a.json b.json --compare

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import functools
import json
import logging
import sys
from pathlib import Path

from sqlfim import __version__
from sqlfim.benchgen import BenchmarkItem, Mode, generate
from sqlfim.corpus import curate, label_cells, load_corpus
from sqlfim.fim import DEFAULT_BUDGET, DEFAULT_MASK
from sqlfim.jsonl import dumps, meta_record, read_jsonl, write_jsonl
from sqlfim.metrics import evaluate
from sqlfim.providers import ProviderConfig, ProviderError, build_provider, train_ngram
from sqlfim.report import comparison_rows, load_report, render_table
from sqlfim import telemetry as tm
from sqlfim.synth import plant_duplicates, synthetic_corpus, telemetry_fixture

log = logging.getLogger("sqlfim")

CORPUS_HELP = 'corpus JSONL, one record per line, e.g. {"text": "SELECT 1", "dialect": "presto", "origin_path": "", "kernel_name": ""}'
BENCH_HELP = ('benchmark JSONL, e.g. {"id": "ab12:single", "prefix": "SELECT ", "target": "a", "suffix": "\\nFROM t", '
              '"mode": "single", "complexity": "easy", "length_category": "small", "source_query_id": "ab12"}')
REPLAY_HELP = 'replay JSONL mapping item ids to completions, e.g. {"id": "ab12:single", "text": "a"}'
SCORES_HELP = ('per-item scores JSONL (written by eval), e.g. {"item_id": "ab12:single", "mode": "single", "complexity": "easy", '
               '"length_category": "small", "provider": "ngram", "prediction": "a", "em": 1, "bleu": 1.0, '
               '"containment": 1.0, "table_match": null, "error": null}')
EVENTS_HELP = 'event JSONL, e.g. {"kind": "Shown", "user_id": "u1", "ts_ms": 1704700800000, "suggestion_id": "s1", "display_ms": 900}'

# Options that configuration files may not set: they only steer parsing.
_NOT_CONFIGURABLE = {"command", "func", "config", "verbose"}


class UsageError(Exception):
    pass


def _effective_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIGURABLE}


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) in (None, [], "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _emit_stats(payload: str, path: str | None) -> None:
    if path:
        Path(path).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload, file=sys.stderr)


def cmd_synth_corpus(args):
    _require(args, "out")
    texts = synthetic_corpus(args.n, seed=args.seed)
    planted = 0
    if args.plant_duplicates:
        texts, planted = plant_duplicates(texts, args.plant_duplicates, seed=args.seed)
    write_jsonl(args.out, ({"text": t} for t in texts))
    print(f"wrote {len(texts)} queries ({planted} planted duplicates) to {args.out}", file=sys.stderr)
    return 0


def cmd_curate(args):
    _require(args, "input", "out")
    if args.max_len is not None and args.min_len > args.max_len:
        raise UsageError(f"--min-len {args.min_len} exceeds --max-len {args.max_len}")
    if args.format == "jsonl":
        with open(args.input, encoding="utf-8") as fh:
            queries, stats = curate(fh, "jsonl", args.min_len, args.max_len, args.near_dedup,
                                    args.cell_target, args.seed)
    else:
        root = Path(args.input)
        paths = sorted(root.rglob("*.sql")) if root.is_dir() else [root]
        queries, stats = curate(paths, "sql-files", args.min_len, args.max_len, args.near_dedup,
                                args.cell_target, args.seed)
    config = _effective_config(args)
    write_jsonl(args.out, (q.to_record() for q in queries), config)
    payload = stats.to_dict()
    payload.update(meta_record(config))
    _emit_stats(json.dumps(payload, indent=2, sort_keys=True), args.stats_out)
    return 0


def cmd_genbench(args):
    _require(args, "corpus", "out")
    modes = [Mode(m.strip()) for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise UsageError("--modes must name at least one of: single, multi")
    queries = load_corpus(args.corpus)
    unlabelled = [q.id for q in queries if not q.complexity or not q.length_category]
    if unlabelled:
        log.warning("%d corpus records lack cell labels; labelling from this corpus", len(unlabelled))
        queries, _ = label_cells(queries)
    items, stats = generate(queries, args.per_cell, args.seed, modes)
    config = _effective_config(args)
    write_jsonl(args.out, (it.to_record() for it in items), config)
    payload = stats.to_dict()
    payload["items"] = len(items)
    payload.update(meta_record(config))
    _emit_stats(json.dumps(payload, indent=2, sort_keys=True), args.stats_out)
    return 0


def cmd_ngram_train(args):
    _require(args, "corpus", "out")
    if not 2 <= args.n <= 5:
        raise UsageError("--n must be between 2 and 5")
    queries = load_corpus(args.corpus)
    model = train_ngram((q.text for q in queries), args.n)
    model.save(args.out)
    return 0


def load_benchmark(path: str) -> list[BenchmarkItem]:
    return [BenchmarkItem.from_record(rec) for rec in read_jsonl(path)]


def cmd_eval(args):
    _require(args, "bench", "provider", "out")
    if args.parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    try:
        config = ProviderConfig(
            kind=args.provider,
            name=args.provider_name,
            endpoint_url=args.endpoint,
            replay_path=args.replay,
            ngram_path=args.ngram_model,
            timeout_ms=args.timeout_ms,
            max_new_chars=args.max_new_chars,
            mask_token=args.mask_token,
            retries=args.retries,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    items = load_benchmark(args.bench)
    provider = build_provider(config)
    mode = None if args.mode == "both" else Mode(args.mode)
    effective = _effective_config(args)
    try:
        report, scores, completions = evaluate(
            items, provider, mode, budget=args.budget, parallelism=args.parallelism,
            max_failure_rate=args.max_failure_rate, config=effective,
        )
    finally:
        provider.close()
    out = Path(args.out)
    body = report.to_dict()
    body.update(meta_record(effective))
    out.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    scores_out = args.scores_out or str(out.with_suffix(".scores.jsonl"))
    write_jsonl(scores_out, (s.to_record() for s in scores), effective)
    if args.completions_out:
        # Latencies vary run to run, so they only go to this optional log.
        write_jsonl(args.completions_out, (
            {"item_id": c.item_id, "text": c.text, "provider": c.provider,
             "latency_ms": c.latency_ms, "truncated_single_line": c.truncated_single_line}
            for c in completions
        ))
    if report.failed:
        print(f"error: {report.failure_rate:.1%} of provider calls failed "
              f"(limit {report.max_failure_rate:.1%})", file=sys.stderr)
        return 1
    return 0


def cmd_report(args):
    _require(args, "scores")
    reports = [load_report(p) for p in args.scores]
    if args.json:
        print(json.dumps(comparison_rows(reports, args.compare), indent=2, sort_keys=True))
    else:
        sys.stdout.write(render_table(reports, args.compare))
    return 0


TELEMETRY_METRICS = ("acceptance", "cpo", "dau", "wau", "retention", "opt-out", "typed-share")


def cmd_telemetry(args):
    _require(args, "events")
    with open(args.events, encoding="utf-8") as fh:
        events = tm.load_events(fh)
    wanted = TELEMETRY_METRICS if args.metric == "all" else (args.metric,)
    at = args.at if args.at is not None else (events[-1].ts_ms if events else 0)
    week = args.week or (tm.iso_week_of(at) if events else None)
    results: dict[str, object] = {}
    for metric in wanted:
        if metric == "acceptance":
            results[metric] = tm.acceptance_rate(events, args.min_display_ms)
        elif metric == "cpo":
            results[metric] = tm.cpo(events)
        elif metric in ("dau", "wau"):
            window = "day" if metric == "dau" else "week"
            results[metric] = len(tm.active_users(events, window, at, args.min_acceptances))
        elif metric == "retention":
            results[metric] = tm.retention(events, week, args.min_acceptances) if week else None
        elif metric == "opt-out":
            if args.population is None:
                if args.metric != "all":
                    raise UsageError("--population is required for the opt-out metric")
                results[metric] = None
            else:
                results[metric] = tm.opt_out_rate(events, args.population)
        elif metric == "typed-share":
            results[metric] = tm.typed_share(events)
    if args.format == "json":
        print(dumps({"metrics": results, "week": week, "at_ms": at, **meta_record(_effective_config(args))}))
    else:
        for name, value in results.items():
            print(f"{name}: {'n/a' if value is None else value}")
    return 0


def cmd_telemetry_fixture(args):
    _require(args, "out")
    events, targets = telemetry_fixture(
        acceptance=args.acceptance, cpo=args.cpo, retention=args.retention,
        opt_out=args.opt_out, population=args.population, week=args.week, seed=args.seed,
    )
    write_jsonl(args.out, (e.to_record() for e in events))
    print(json.dumps(targets, sort_keys=True), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqlfim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    parser.add_argument("--config", help="JSON file of option values; command-line flags win. "
                        "Keys may be top-level or nested under the subcommand name.")
    sub = parser.add_subparsers(dest="command", required=True)
    add = functools.partial(sub.add_parser, formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("synth-corpus", help="write a synthetic SQL corpus")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plant-duplicates", type=float, default=0.0, metavar="FRACTION",
                   help="share of the output that is a respelled duplicate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_corpus)

    p = add("curate", help="filter, dedup and balance a corpus", epilog=CORPUS_HELP)
    p.add_argument("--in", dest="input", help="corpus JSONL, or a .sql file/directory with --format sql-files")
    p.add_argument("--format", choices=("jsonl", "sql-files"), default="jsonl")
    p.add_argument("--min-len", type=int, default=0, help="minimum non-whitespace characters")
    p.add_argument("--max-len", type=int, default=None, help="maximum non-whitespace characters")
    p.add_argument("--near-dedup", action="store_true", help="also drop 5-token-shingle Jaccard >= 0.9 matches")
    p.add_argument("--cell-target", type=int, default=None, help="queries per complexity x length cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--stats-out", help="stats JSON path (default: stderr)")
    p.set_defaults(func=cmd_curate)

    p = add("genbench", help="cut a benchmark from a curated corpus", epilog=BENCH_HELP)
    p.add_argument("--corpus")
    p.add_argument("--per-cell", type=int, default=10, help="items per cell per mode")
    p.add_argument("--modes", default="single,multi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_genbench)

    p = add("ngram-train", help="fit the n-gram baseline provider", epilog=CORPUS_HELP)
    p.add_argument("--corpus")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ngram_train)

    p = add("eval", help="run a provider on a benchmark and score it", epilog=BENCH_HELP + "\n\n" + REPLAY_HELP)
    p.add_argument("--bench", help=BENCH_HELP)
    p.add_argument("--provider", choices=("http", "replay", "ngram"))
    p.add_argument("--provider-name", help="label used in reports (default: the provider kind)")
    p.add_argument("--replay")
    p.add_argument("--endpoint", help="http provider URL")
    p.add_argument("--ngram-model")
    p.add_argument("--mode", choices=("single", "multi", "both"), default="both")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="prompt budget in characters")
    p.add_argument("--mask-token", default=DEFAULT_MASK)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--timeout-ms", type=int, default=10_000)
    p.add_argument("--max-new-chars", type=int, default=4096)
    p.add_argument("--retries", type=int, default=0)
    p.add_argument("--max-failure-rate", type=float, default=0.10)
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--scores-out", help="per-item scores JSONL (default: <out>.scores.jsonl)")
    p.add_argument("--completions-out", help="optional completion log with latencies")
    p.set_defaults(func=cmd_eval)

    p = add("report", help="render a metric table with pp deltas", epilog=SCORES_HELP)
    p.add_argument("--scores", nargs="+", help="eval report JSON or per-item scores JSONL files")
    p.add_argument("--compare", action="store_true", help="add percentage-point delta columns")
    p.add_argument("--json", action="store_true", help="emit the table as JSON")
    p.set_defaults(func=cmd_report)

    p = add("telemetry", help="deployment metrics from an event log", epilog=EVENTS_HELP)
    p.add_argument("--events")
    p.add_argument("--metric", choices=(*TELEMETRY_METRICS, "all"), default="all")
    p.add_argument("--population", type=int)
    p.add_argument("--week", help="ISO week such as 2024-W02 (default: week of --at)")
    p.add_argument("--at", type=int, help="epoch ms closing the DAU/WAU window (default: last event)")
    p.add_argument("--min-display-ms", type=int, default=tm.DEFAULT_MIN_DISPLAY_MS)
    p.add_argument("--min-acceptances", type=int, default=1, help="acceptances that make a user active")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_telemetry)

    p = add("telemetry-fixture", help="synthesize an event log with given metric values")
    p.add_argument("--acceptance", type=float, default=0.21)
    p.add_argument("--cpo", type=float, default=2.2)
    p.add_argument("--retention", type=float, default=0.8)
    p.add_argument("--opt-out", type=float, default=0.003)
    p.add_argument("--population", type=int, default=1000)
    p.add_argument("--week", default="2024-W02")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_telemetry_fixture)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        data = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config: {exc}")
    if not isinstance(data, dict):
        parser.error("--config must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        dests = {a.dest for a in sp._actions} - _NOT_CONFIGURABLE
        values = {k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)}
        values.update({k.replace("-", "_"): v for k, v in data.get(name, {}).items()})
        sp.set_defaults(**{k: v for k, v in values.items() if k in dests})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sqlfim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ProviderError) as exc:
        print(f"sqlfim {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
