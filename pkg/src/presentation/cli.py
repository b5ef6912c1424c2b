"""Command-line surface: gen, run, ablate, report."""
from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Optional, Sequence

from src.application.commands import AblateCommand, GenerateCommand, ReportCommand, RunCommand
from src.application.services import AblationService, PipelineService, ReportService
from src.application.services.ablation_service import SWEEP_PARAMS
from src.config import Settings
from src.infrastructure.config import ExperimentConfig, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdtt",
        description="Estimate annotator- and instance-dependent transition matrices for learning from crowds.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", type=Path, default=None, help="YAML experiment config")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--out", type=Path, default=None, help="output root (default: settings)")

    gen = commands.add_parser("gen", help="write a synthetic crowd dataset")
    common(gen)

    run = commands.add_parser("run", help="run one pipeline")
    common(run)
    run.add_argument("--method", default=None, help="taidtm, taidtm_ft, global_only, mv or ds")
    run.add_argument("--data", type=Path, default=None, help="directory with instances.csv/annotations.csv")
    run.add_argument("--dry-run", action="store_true", help="print the stage plan and exit")

    ablate = commands.add_parser("ablate", help="sweep one parameter over seeds and methods")
    common(ablate)
    ablate.add_argument("--param", required=True, help=", ".join(sorted(SWEEP_PARAMS)))
    ablate.add_argument("--values", nargs="+", required=True)
    ablate.add_argument("--seeds", nargs="+", type=int, required=True)
    ablate.add_argument("--methods", nargs="*", default=[])
    ablate.add_argument("--workers", type=int, default=None, help="worker processes (default: settings)")

    report = commands.add_parser("report", help="aggregate finished runs")
    report.add_argument("runs", nargs="+", type=Path, help="run directories out/{config_hash}")
    report.add_argument("--out", type=Path, default=None)
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, method=getattr(args, "method", None))


def dispatch(args: argparse.Namespace, settings: Settings) -> int:
    """Run the chosen subcommand; domain errors propagate to the caller."""
    out_dir = args.out or settings.output_dir
    if args.command == "gen":
        directory = PipelineService().generate(GenerateCommand(config=_config(args), out_dir=out_dir))
        print(directory)
    elif args.command == "run":
        result = PipelineService().run_pipeline(
            RunCommand(config=_config(args), out_dir=out_dir, dry_run=args.dry_run, data_dir=args.data)
        )
        if result.metrics is None:
            for position, stage in enumerate(result.stages, start=1):
                print(f"{position}. {stage}")
        else:
            print(json.dumps(result.metrics.to_dict(), sort_keys=True))
    elif args.command == "ablate":
        rows = AblationService().run_ablation(
            AblateCommand(
                config=_config(args),
                out_dir=out_dir,
                param=args.param,
                values=tuple(args.values),
                seeds=tuple(args.seeds),
                methods=tuple(args.methods),
                workers=args.workers or settings.workers,
            )
        )
        print(f"{len(rows)} cells")
    else:
        checks = ReportService().build_report(ReportCommand(run_dirs=tuple(args.runs), out_dir=out_dir))
        for check in checks:
            verdict = "n/a" if check.passed is None else ("pass" if check.passed else "FAIL")
            print(f"{check.name}: {verdict} ({check.detail})")
    return 0


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
