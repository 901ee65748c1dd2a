"""Command-line front end: parse a problem file, run a command, write reports."""
import argparse
import logging
import sys
from typing import List, Optional

from config import Config
from services.report_service import ReportService, write_error
from services.result_store import ResultStore
from utils.errors import ConfigError, PencilError
from utils.problem_config import load_problem_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

COMMANDS = ReportService.COMMANDS + ('all',)


def run(command: str, config_path: str, output_dir: str, seed: Optional[int] = None,
        cells: Optional[int] = None) -> int:
    """
    Run one command on one problem file.

    Args:
        command: solve, transform, oscillate, chebyshev, regularity or all
        config_path: Problem file
        output_dir: Directory for the report files
        seed: Overrides analysis.seed
        cells: Overrides mesh.cells

    Returns:
        Exit status: 0 all properties pass, 1 a property failed,
        2 the problem file is invalid, 3 a numerical error occurred
    """
    store = ResultStore(output_dir)
    store.save_status('pending', command)
    try:
        if command not in COMMANDS:
            raise ConfigError(f"Unknown command '{command}'", field='command')
        config = load_problem_config(config_path, seed=seed, cells=cells)
        passed = ReportService(config, store).run(command)
    except ConfigError as e:
        logger.error("Invalid problem file: %s", e)
        write_error(store, e, command)
        return EXIT_CONFIG_ERROR
    except PencilError as e:
        logger.error("%s failed in %s: %s", command, e.module, e)
        write_error(store, e, command)
        return EXIT_NUMERICAL_ERROR

    if not passed:
        logger.warning("=== %s: some properties failed ===", command)
        return EXIT_PROPERTY_FAILED
    logger.info("=== %s: all properties passed ===", command)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pencil',
        description='Spectra, potential elimination and oscillation checks for '
                    'Sturm-Liouville pencils with distributional coefficients.'
    )
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True, help='problem file')
    parser.add_argument('--out', default=Config.RESULTS_DIR, help='output directory')
    parser.add_argument('--seed', type=int, help='overrides analysis.seed')
    parser.add_argument('--cells', type=int, help='overrides mesh.cells')
    parser.add_argument('--queue', action='store_true',
                        help='submit to the Celery worker instead of running here')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )

    if args.queue:
        from tasks.analysis_tasks import run_analysis

        task = run_analysis.delay(args.command, args.config, args.out, args.seed, args.cells)
        print(f"Submitted task {task.id}")
        return EXIT_OK

    return run(args.command, args.config, args.out, seed=args.seed, cells=args.cells)


if __name__ == '__main__':
    sys.exit(main())
