"""Synthesize an event log with chosen deployment metrics and read them back.

    python3 scripts/telemetry_demo.py --acceptance 0.21 --cpo 2.2 --out runs/events.jsonl
"""

import argparse
import json
from pathlib import Path

from sqlfim import telemetry as tm
from sqlfim.jsonl import write_jsonl
from sqlfim.synth import telemetry_fixture


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--acceptance", type=float, default=0.21)
    parser.add_argument("--cpo", type=float, default=2.2)
    parser.add_argument("--retention", type=float, default=0.8)
    parser.add_argument("--opt-out", type=float, default=0.003)
    parser.add_argument("--population", type=int, default=1000)
    parser.add_argument("--week", default="2024-W02")
    parser.add_argument("--out", default="runs/events.jsonl")
    args = parser.parse_args()

    events, targets = telemetry_fixture(args.acceptance, args.cpo, args.retention, args.opt_out,
                                        args.population, args.week)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(args.out, (e.to_record() for e in events))
    measured = {
        "acceptance": tm.acceptance_rate(events),
        "cpo": tm.cpo(events),
        "retention": tm.retention(events, args.week),
        "opt_out": tm.opt_out_rate(events, args.population),
    }
    print(json.dumps({"events": len(events), "targets": targets, "measured": measured}, indent=2))


if __name__ == "__main__":
    main()
