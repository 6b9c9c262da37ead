"""Command-line entry points: run, replay, and analyze."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analyze, engine


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="foldstop",
        description="Budgeted model selection with early stopping of cross-validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a live run from a JSON manifest")
    p_run.add_argument("manifest", type=Path)

    p_replay = sub.add_parser("replay", help="simulate a run over a fold-score matrix")
    p_replay.add_argument("scores", type=Path, help="CSV of scores, configs x folds")
    p_replay.add_argument("--policy", required=True,
                          choices=["none", "aggressive", "forgiving", "robust-3", "robust-5"])
    p_replay.add_argument("--budget", required=True, type=float, help="simulated seconds")
    p_replay.add_argument("--workers", type=int, default=1)
    p_replay.add_argument("--costs", type=Path, default=None,
                          help="CSV of per-fold costs (default: 1 second per fold)")
    p_replay.add_argument("--out", type=Path, default=Path("replay_run"))

    p_an = sub.add_parser("analyze", help="post-hoc analysis over run directories")
    an_sub = p_an.add_subparsers(dest="report", required=True)
    for name in ("speedup", "counts", "traces", "rankcorr"):
        p = an_sub.add_parser(name)
        p.add_argument("run_dirs", nargs="+", type=Path)
        p.add_argument("--out", required=True, type=Path)
        if name == "speedup":
            p.add_argument("--baseline", default="none",
                           help="method label of the no-stopping baseline")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            manifest = engine.RunManifest.from_json(args.manifest)
            out = engine.run(manifest)
            print(f"run complete: {out}")
        elif args.command == "replay":
            matrix = engine.FoldScoreMatrix.from_csv(args.scores, args.costs)
            out = engine.replay_to_dir(
                matrix, args.policy, args.budget, args.workers, args.out
            )
            print(f"replay complete: {out}")
        else:
            written = _run_report(args)
            for label, path in sorted(written.items()):
                print(f"{label}: {path}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _run_report(args) -> dict:
    if args.report == "rankcorr":
        return analyze.rankcorr_report(args.run_dirs, args.out)
    return analyze.aggregate_report(
        args.run_dirs, args.out,
        baseline_method=getattr(args, "baseline", "none"),
        sections=(args.report,),
    )


if __name__ == "__main__":
    raise SystemExit(main())
