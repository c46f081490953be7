"""
Beam Management Experiment CLI Runner

Main entry point for the experiment utility: every subcommand loads a JSON
configuration, applies ``--key=value`` overrides and drives the
BeamManagementService.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from database.repository import ArtifactRepository
from src.core.config import SimConfig, load_config
from src.core.errors import EXIT_CONFIG, ConfigError, exit_code_for
from src.core.service import BeamManagementService
from src.processors.dataset import export_csv
from src.schema.contracts import PolicyKind

from .config import ExperimentPaths
from .matrix import PRESETS, build_matrix, cell_name
from .report import write_report

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def _service() -> BeamManagementService:
    return BeamManagementService(repository=ArtifactRepository())


def _config(args) -> SimConfig:
    return load_config(args.config, args.overrides)


def _policies(raw: Optional[str]) -> Optional[List[PolicyKind]]:
    if raw is None:
        return None
    try:
        return [PolicyKind(name.strip()) for name in raw.split(",") if name.strip()]
    except ValueError as e:
        raise ConfigError(f"Unknown policy in {raw!r}: {e}") from e


def run_generate_data(args, paths: ExperimentPaths) -> None:
    """Run data collection and write the dataset"""
    config = _config(args)
    output = Path(args.output) if args.output else paths.dataset_file(cell_name(config))
    service = _service()
    dataset = service.run_data_collection(config, output)
    logger.info(f"Dataset with {len(dataset)} samples written to {output}")
    if args.csv:
        csv_path = export_csv(dataset, output.with_suffix(".csv"), service.repository)
        logger.info(f"CSV export written to {csv_path}")


def run_train(args, paths: ExperimentPaths) -> None:
    config = _config(args)
    service = _service()
    dataset = service.load_dataset(paths.validate_input_file(args.dataset, (".jsonl",)), config)
    output = Path(args.output) if args.output else paths.weights_file(cell_name(config))
    service.train_model(config, dataset, output)
    logger.info(f"Weights written to {output}")


def run_evaluate(args, paths: ExperimentPaths) -> None:
    config = _config(args)
    service = _service()
    weights = service.load_weights(paths.validate_input_file(args.weights)) if args.weights else None
    run = service.run_campaign(config, weights, _policies(args.policies), args.name)
    written = service.write_campaign(run, args.output_dir or paths.results_dir)
    logger.info(f"Evaluation result written to {written['result']}")


def run_simulate(args, paths: ExperimentPaths) -> None:
    config = _config(args)
    written = _service().export_drop(config, args.drop_id, args.output_dir or paths.drops_dir)
    for kind, path in written.items():
        logger.info(f"{kind}: {path}")


def run_matrix(args, paths: ExperimentPaths) -> None:
    """Run the experiment matrix and write one result file per cell"""
    base = _config(args)
    cells = build_matrix(base, args.preset or ["all"])
    service = _service()
    results = asyncio.run(service.run_experiment_matrix(
        cells, args.max_concurrency or paths.default_max_concurrency))
    out = Path(args.output_dir or paths.results_dir)
    for result in results:
        service.repository.write_json(out / f"{result.name}.result.json", result)
    failed = [r.name for r in results if r.status != "ok"]
    logger.info(f"Matrix finished: {len(results) - len(failed)} ok, {len(failed)} failed")


def run_report(args, paths: ExperimentPaths) -> None:
    inputs = [paths.validate_input_file(p) for p in args.results]
    write_report(inputs, args.output_dir or paths.reports_dir, grid_bin_m=args.grid_bin)


def _split_overrides(extra: Sequence[str]) -> Tuple[List[str], List[str]]:
    overrides = [arg for arg in extra if arg.startswith("--") and "=" in arg]
    return overrides, [arg for arg in extra if arg not in overrides]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Beam Management Experiment Utility - simulate, train and evaluate beam predictors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Collect a narrow-to-narrow dataset with Set B of 8 beams
  python -m experiment_utility generate-data --config configs/sbp2.json --codebook.set_b_size=8

  # Train on it and evaluate against the baselines
  python -m experiment_utility train --config configs/sbp2.json --dataset data/datasets/SBP2_16_64.jsonl
  python -m experiment_utility evaluate --config configs/sbp2.json --weights data/weights/SBP2_16_64.json

  # Export one drop (codebooks, layout, measurement reports)
  python -m experiment_utility simulate --config configs/sbp2.json --drop-id 3

  # Set B sweeps and speed generalization, two cells at a time
  python -m experiment_utility matrix --config configs/base.json --preset sbp-sweep --preset speed

  # KPI tables, CDF dumps and position grids
  python -m experiment_utility report --results data/results/*.result.json

Any configuration field can be overridden with --section.field=value.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
        """
    )
    subparsers = parser.add_subparsers(dest='mode', help='Operation mode')

    def add_config(sub):
        sub.add_argument('--config', '-c', type=str, required=True, help='JSON configuration file')
        return sub

    generate = add_config(subparsers.add_parser('generate-data', help='Simulate drops and build a dataset'))
    generate.add_argument('--output', '-o', type=str, help='Dataset file (default: data/datasets/<cell>.jsonl)')
    generate.add_argument('--csv', action='store_true', help='Also write the samples as CSV next to the dataset')

    train = add_config(subparsers.add_parser('train', help='Train a beam predictor'))
    train.add_argument('--dataset', '-d', type=str, required=True, help='Dataset JSON-lines file')
    train.add_argument('--output', '-o', type=str, help='Weights file (default: data/weights/<cell>.json)')

    evaluate = add_config(subparsers.add_parser('evaluate', help='Run an inference campaign'))
    evaluate.add_argument('--weights', '-w', type=str, help='Weights file (required for the model policy)')
    evaluate.add_argument('--policies', '-p', type=str,
                          help=f"Comma-separated policies from {[k.value for k in PolicyKind]}")
    evaluate.add_argument('--name', '-n', type=str, help='Result name (default: <CASE>_<N_B>_<N_A>)')
    evaluate.add_argument('--output-dir', type=str, help='Result directory (default: data/results)')

    simulate = add_config(subparsers.add_parser('simulate', help='Simulate and export a single drop'))
    simulate.add_argument('--drop-id', type=int, default=0, help='Drop index (default: 0)')
    simulate.add_argument('--output-dir', type=str, help='Output directory (default: data/drops)')

    matrix = add_config(subparsers.add_parser('matrix', help='Run the experiment matrix'))
    matrix.add_argument('--preset', action='append', choices=[*PRESETS, 'all'],
                        help='Matrix preset, repeatable (default: all)')
    matrix.add_argument('--max-concurrency', type=int, help='Cells run at the same time (default: 2)')
    matrix.add_argument('--output-dir', type=str, help='Result directory (default: data/results)')

    report = subparsers.add_parser('report', help='Build KPI tables from result files')
    report.add_argument('--results', '-r', type=str, nargs='+', required=True, help='Result JSON files')
    report.add_argument('--grid-bin', type=float, default=20.0, help='Position grid bin size in meters')
    report.add_argument('--output-dir', type=str, help='Report directory (default: data/reports)')
    return parser


MODES = {
    'generate-data': run_generate_data,
    'train': run_train,
    'evaluate': run_evaluate,
    'simulate': run_simulate,
    'matrix': run_matrix,
    'report': run_report,
}


def main(argv: Optional[Sequence[str]] = None, paths: Optional[ExperimentPaths] = None) -> None:
    """Main CLI entry point"""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    args.overrides, unknown = _split_overrides(extra)
    if unknown:
        parser.error(f"unrecognized arguments: {' '.join(unknown)}")

    if not args.mode:
        parser.print_help()
        sys.exit(EXIT_CONFIG)

    paths = paths or ExperimentPaths()
    try:
        MODES[args.mode](args, paths)
    except KeyboardInterrupt:
        logger.info("Operation interrupted by user")
        sys.exit(0)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"❌ {args.mode} failed ({type(e).__name__}): {e}")
        sys.exit(code)


if __name__ == "__main__":
    main()
