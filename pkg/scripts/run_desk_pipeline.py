"""Run the full pipeline at desk scale and print the comparison table.

    python3 scripts/run_desk_pipeline.py --workdir runs/desk --seed 1

Stages (all through the ``sqlfim`` CLI, so every artifact lands in --workdir):
synthetic corpus -> curate -> genbench -> n-gram baseline and replay oracle
evals -> report --compare.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from sqlfim.cli import main as sqlfim
from sqlfim.jsonl import dumps, read_jsonl


def step(*argv) -> None:
    argv = [str(a) for a in argv]
    print("$ sqlfim " + " ".join(argv), file=sys.stderr)
    status = sqlfim(argv)
    if status:
        sys.exit(status)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--workdir", default="runs/desk")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--queries", type=int, default=1000)
    parser.add_argument("--cell-target", type=int, default=42)
    parser.add_argument("--per-cell", type=int, default=10)
    parser.add_argument("--duplicates", type=float, default=0.06)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    os.chdir(workdir)
    step("synth-corpus", "--n", args.queries, "--seed", args.seed,
         "--plant-duplicates", args.duplicates, "--out", "raw.jsonl")
    step("curate", "--in", "raw.jsonl", "--cell-target", args.cell_target, "--seed", args.seed,
         "--out", "corpus.jsonl", "--stats-out", "corpus_stats.json")
    step("genbench", "--corpus", "corpus.jsonl", "--per-cell", args.per_cell, "--seed", args.seed,
         "--out", "bench.jsonl", "--stats-out", "bench_stats.json")
    with open("oracle.jsonl", "w", encoding="utf-8") as fh:
        for rec in read_jsonl("bench.jsonl"):
            fh.write(dumps({"id": rec["id"], "text": rec["target"]}) + "\n")
    step("ngram-train", "--corpus", "corpus.jsonl", "--n", 3, "--out", "ngram.json")
    step("eval", "--bench", "bench.jsonl", "--provider", "ngram", "--ngram-model", "ngram.json",
         "--provider-name", "ngram-3", "--out", "ngram_report.json")
    step("eval", "--bench", "bench.jsonl", "--provider", "replay", "--replay", "oracle.jsonl",
         "--provider-name", "oracle", "--out", "oracle_report.json")
    stats = json.loads(Path("corpus_stats.json").read_text())
    print(f"corpus: {stats['total']} raw, rejected {stats['rejected_by_filter']}", file=sys.stderr)
    step("report", "--scores", "ngram_report.json", "oracle_report.json", "--compare")


if __name__ == "__main__":
    main()
