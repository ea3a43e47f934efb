"""Command-line entry point: ``flagtuner <phase> --project <file> [...]``.

Exit status: 0 success, 1 usage error, 2 target failure, 3 missing
dependency artifact (an earlier phase was not run).
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .pipeline import (
    PipelineError,
    RunArtifacts,
    UsageError,
    cmd_datagen,
    cmd_report,
    cmd_select,
    cmd_tune,
    load_project,
)
from .tuners import ALGORITHMS


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit(2)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flagtuner",
        description="Autotune runtime flags: characterize, select, tune, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    descriptions = {
        "datagen": "characterize the target and build the labeled dataset",
        "select": "pick impactful flags from the dataset by lasso",
        "tune": "search the selected flag subspace",
        "report": "compare completed tuning runs",
    }
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--project", required=True, help="project YAML file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the project seed")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="override the project output directory")
        if name == "tune":
            p.add_argument("--algorithm", choices=ALGORITHMS, default="bo",
                           help="tuning strategy (default: bo)")
            p.add_argument("--all-flags", action="store_true",
                           help="tune every active flag, skipping selection")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        project = load_project(args.project, seed=args.seed, out_dir=args.out)
        if args.command == "datagen":
            arts = cmd_datagen(project)
            _done(arts.dataset_csv, arts.al_report_json, arts.model_json)
        elif args.command == "select":
            arts = cmd_select(project)
            _done(arts.selected_flags_txt, arts.lasso_report_json)
        elif args.command == "tune":
            arts = cmd_tune(project, algorithm=args.algorithm, all_flags=args.all_flags)
            _done(
                arts.tuning_report_json(args.algorithm),
                arts.trajectory_csv(args.algorithm),
                arts.summary_txt(args.algorithm),
            )
        else:
            arts = cmd_report(project)
            _done(arts.report_csv, arts.report_txt)
    except PipelineError as exc:
        message = " ".join(str(exc).split())
        print(f"error:{exc.kind}: {message}", file=sys.stderr)
        return exc.exit_code
    return 0


def _done(*paths: str) -> None:
    for p in paths:
        print(f"wrote {p}")


if __name__ == "__main__":
    sys.exit(main())
