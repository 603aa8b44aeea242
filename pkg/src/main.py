"""
Main entry point for FedGCV

Usage:
    python -m src.main run --config config/settings.yaml --phases train,unlearn,repair
    python -m src.main sweep --config config/settings.yaml --param tau --values 2,5,10,20,50
    python -m src.main ablate --config config/settings.yaml --variant no_gru

Exit codes: 0 on success, 2 on a config error, 3 on a runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path

from .config import parse_config
from .exceptions import ConfigError, FedGcvError
from .experiments import prepare_context, run_ablation, run_pipeline, run_sweep, train_phase
from .models import ResultsReport, Variant
from .reporters import emit_results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in _csv(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def load_experiment(args):
    """Parse --config with the CLI overrides applied"""
    cfg = parse_config(args.config, overrides={"output_dir": args.out, "workers": args.workers})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def log_summary(report: ResultsReport) -> None:
    logger.info("=" * 50)
    logger.info("SUMMARY")
    logger.info("=" * 50)
    for key, metrics in report.reports.items():
        pre = "-" if metrics.mia_rate_pre is None else f"{metrics.mia_rate_pre:.4f}"
        post = "-" if metrics.mia_rate_post is None else f"{metrics.mia_rate_post:.4f}"
        seconds = report.timings.get(key)
        took = f" ({seconds:.1f}s)" if seconds is not None else ""
        logger.info(f"  {key}: accuracy {metrics.accuracy:.4f}, MIA {pre} -> {post}{took}")


def cmd_run(args) -> ResultsReport:
    cfg = load_experiment(args)
    phases = _csv(args.phases) if args.phases else None
    return run_pipeline(cfg, phases=phases, resume=args.resume)


def cmd_sweep(args) -> ResultsReport:
    cfg = load_experiment(args)
    reports = run_sweep(cfg, param=args.param, values=args.values, seeds=args.seeds)
    report = ResultsReport(reports=reports, config=cfg.snapshot())
    emit_results(report, cfg.output_dir)
    return report


def cmd_ablate(args) -> ResultsReport:
    cfg = load_experiment(args)
    variants = list(Variant) if args.variant == "all" else [Variant(args.variant)]
    trained = prepare_context(cfg)
    train_phase(trained)
    report = ResultsReport(config=cfg.snapshot())
    for variant in variants:
        report.reports[f"ablation:{variant.value}"] = run_ablation(cfg, variant, trained=trained)
    emit_results(report, cfg.output_dir)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgcv", description="FedGCV graph federated unlearning simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Experiment config (YAML or JSON)")
    common.add_argument("--out", type=str, help="Output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="Reset every seed to this value")
    common.add_argument("--workers", type=int, help="Process count for sweep points")

    run_parser = subparsers.add_parser("run", parents=[common], help="Run pipeline phases")
    run_parser.add_argument(
        "--phases",
        type=str,
        help="Comma-separated subset of train,unlearn,repair,retrain,ablation,sweep"
    )
    run_parser.add_argument("--resume", action="store_true", help="Reuse matching phase checkpoints")

    sweep_parser = subparsers.add_parser("sweep", parents=[common], help="Sensitivity sweep")
    sweep_parser.add_argument("--param", type=str, help="Dotted config key or alias (tau, beta, s_f, ...)")
    sweep_parser.add_argument("--values", type=_floats, help="Comma-separated values")
    sweep_parser.add_argument("--seeds", type=int, help="Repetitions per value")

    ablate_parser = subparsers.add_parser("ablate", parents=[common], help="Ablation variants")
    ablate_parser.add_argument(
        "--variant",
        choices=[v.value for v in Variant] + ["all"],
        default="all",
        help="Component to disable"
    )
    return parser


def main(argv=None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    commands = {"run": cmd_run, "sweep": cmd_sweep, "ablate": cmd_ablate}
    if args.command not in commands:
        parser.print_help()
        return EXIT_CONFIG

    try:
        report = commands[args.command](args)
    except ConfigError as e:
        logger.error(f"Config error at {e.key_path}: {e.reason}")
        return EXIT_CONFIG
    except (FedGcvError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME

    log_summary(report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
