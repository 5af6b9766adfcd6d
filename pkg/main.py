"""
Capture Point Push Recovery Harness
Main orchestration module
"""
import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from config import Config
from exceptions import IntegrationError, ScenarioConfigError
from models import CliRequest, ConfigIssue, RecoveryOutcome, ScenarioConfig, ScenarioSummary, SummaryReport, ValidationResult
from services.config_loader import ScenarioLoaderService
from services.envelope import EnvelopeService
from services.output_writer import OutputWriterService
from services.simulator import SimulationService
from services.validator import ValidationService

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("run", "sweep", "envelope", "validate")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    """Raised for malformed command lines."""


class HarnessArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting with status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _simulate(config: ScenarioConfig) -> Tuple[RecoveryOutcome, float]:
    started = time.perf_counter()
    _, outcome = SimulationService().run_scenario(config)
    return outcome, time.perf_counter() - started


class PushRecoveryHarness:
    """
    Main orchestrator for push recovery experiments.
    Coordinates all services from scenario file to CSV and workbook output.
    """

    def __init__(self, config: Config, quiet: bool = False):
        self.config = config
        self.quiet = quiet
        self.loader = ScenarioLoaderService()
        self.validator = ValidationService(self.loader)
        self.simulator = SimulationService()
        self.envelope_service = EnvelopeService(config, self.simulator)
        self.output_writer = OutputWriterService(config)

    def _say(self, message: str) -> None:
        if not self.quiet:
            print(message)

    def run(self, config_path: Path, output_dir: Path, overrides: Sequence[str] = ()) -> SummaryReport:
        """
        Simulate one scenario and write its trajectory and summary.

        Args:
            config_path: Scenario file
            output_dir: Directory receiving trajectory.csv and summary.xlsx
            overrides: section.key=value strings applied after the file
        """
        self._say("Starting push recovery run...")
        self._say(f"Scenario file: {config_path}")

        # Step 1: Load scenario
        self._say("\n[1/3] Loading scenario...")
        scenario = self.loader.load_from_file(config_path, overrides)
        self._say(f"Loaded scenario with {len(scenario.pushes)} push(es), mode {scenario.controller.mode.value}")

        # Step 2: Simulate
        self._say("\n[2/3] Simulating...")
        started = time.perf_counter()
        log, outcome = self.simulator.run_scenario(scenario)
        runtime = time.perf_counter() - started
        self._say(f"Simulated {len(log)} control ticks in {runtime:.2f} s")

        # Step 3: Write output
        self._say("\n[3/3] Writing results...")
        output_dir.mkdir(parents=True, exist_ok=True)
        report = SummaryReport(scenarios=[self._summary(config_path.stem, outcome, runtime)])
        self.output_writer.emit_csv(log, output_dir / self.config.trajectory_csv)
        self.output_writer.write_summary(report, output_dir / self.config.summary_workbook)
        self._say(f"\nResults written to: {output_dir}")

        self._say("\n" + "=" * 60)
        self._say("RUN SUMMARY")
        self._say("=" * 60)
        self._say(f"Verdict:             {outcome.verdict.value} ({outcome.reason})")
        self._say(f"Max CP excursion:    {outcome.max_cp_excursion_m:.4f} m")
        settle = "n/a" if outcome.time_to_settle_s is None else f"{outcome.time_to_settle_s:.2f} s"
        self._say(f"Time to settle:      {settle}")
        self._say(f"CoP saturated:       {100 * outcome.cop_saturated_fraction:.1f} % of ticks")
        self._say(f"Step capturable:     {'yes' if outcome.step_capturable else 'no'}")
        self._say("=" * 60)
        return report

    def sweep(
        self,
        config_path: Path,
        output_dir: Path,
        overrides: Sequence[str] = (),
        workers: int = 1
    ) -> SummaryReport:
        """
        Run the grid spanned by overrides with '|' separated alternatives.

        Rows keep grid order whatever the worker count. Rows finished before
        a failure are still written.
        """
        self._say("Starting push recovery sweep...")

        # Step 1: Expand grid and load every point
        self._say("\n[1/3] Loading scenario grid...")
        if not config_path.exists():
            raise FileNotFoundError(f"File not found: {config_path}")
        text = config_path.read_text(encoding="utf-8")
        try:
            grid = self.loader.expand_sweep(overrides)
        except ValueError as e:
            raise ScenarioConfigError([ConfigIssue(key="--set", message=str(e))]) from e
        scenarios = [self.loader.parse_config(text, point) for point in grid]
        self._say(f"Loaded {len(scenarios)} grid point(s)")

        # Step 2: Simulate
        self._say("\n[2/3] Simulating grid...")
        output_dir.mkdir(parents=True, exist_ok=True)
        rows: List[Dict] = []
        report = SummaryReport()
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as executor:
                    self._collect(grid, executor.map(_simulate, scenarios), rows, report)
            else:
                self._collect(grid, map(_simulate, scenarios), rows, report)
        finally:
            # Step 3: Write output
            self._say("\n[3/3] Writing results...")
            self.output_writer.write_table(pd.DataFrame(rows), output_dir / self.config.sweep_csv)
            self.output_writer.write_summary(report, output_dir / self.config.summary_workbook)
            self._say(f"Wrote {len(rows)} of {len(grid)} row(s) to: {output_dir}")
        return report

    def _collect(self, grid: List[List[str]], results, rows: List[Dict], report: SummaryReport) -> None:
        for point, (outcome, runtime) in zip(grid, results):
            row: Dict = {}
            for override in point:
                key, value = override.split('=', 1)
                row[key.strip()] = value.strip()
            row.update({
                'Verdict': outcome.verdict.value,
                'MaxCPExcursion_m': outcome.max_cp_excursion_m,
                'TimeToSettle_s': outcome.time_to_settle_s,
                'CoPSaturatedFraction': outcome.cop_saturated_fraction,
                'StepCapturable': outcome.step_capturable,
            })
            rows.append(row)
            report.scenarios.append(self._summary(" ".join(point) or "base", outcome, runtime))
            self._say(f"  {' '.join(point) or 'base'}: {outcome.verdict.value}")

    def envelope(
        self,
        config_path: Path,
        output_dir: Path,
        overrides: Sequence[str] = (),
        workers: int = 1
    ) -> SummaryReport:
        """Envelope for each rung of the strategy ladder, printed as a table."""
        self._say("Starting envelope search...")

        self._say("\n[1/3] Loading scenario...")
        scenario = self.loader.load_from_file(config_path, overrides)
        direction = self.envelope_service.push_direction(scenario)
        self._say(f"Push direction: ({direction[0]:.3f}, {direction[1]:.3f})")

        self._say("\n[2/3] Searching envelopes...")
        started = time.perf_counter()
        results = self.envelope_service.strategy_ladder(
            scenario, direction, self.config.envelope_tolerance_Ns, workers
        )
        report = SummaryReport(envelopes=results, envelope_runtime_s=time.perf_counter() - started)

        self._say("\n[3/3] Writing results...")
        output_dir.mkdir(parents=True, exist_ok=True)
        table = self.output_writer.envelope_frame(report)
        self.output_writer.write_table(table, output_dir / self.config.envelope_csv)
        self.output_writer.write_summary(report, output_dir / self.config.summary_workbook)

        # Table is the result of this subcommand, printed even when quiet
        print("\n" + "=" * 60)
        print("RECOVERABLE PUSH ENVELOPE")
        print("=" * 60)
        print(f"{'Strategy':<16}{'Impulse (N*s)':>16}{'Bounded':>10}{'Runs':>8}")
        for result in results:
            print(f"{result.label:<16}{result.impulse_Ns:>16.5f}{str(result.bounded):>10}{result.evaluations:>8}")
        print("=" * 60)
        return report

    def validate(self, config_path: Path, overrides: Sequence[str] = ()) -> ValidationResult:
        """Parse only. Every problem found is printed."""
        result = self.validator.validate_file(config_path, overrides)
        if result.is_valid:
            self._say(f"{config_path}: valid")
        else:
            print(f"{config_path}: validation failed with {len(result.errors)} error(s):", file=sys.stderr)
            for error in result.errors:
                print(f"  - {error}", file=sys.stderr)
        return result

    def _summary(self, name: str, outcome: RecoveryOutcome, runtime: float) -> ScenarioSummary:
        return ScenarioSummary(
            name=name,
            verdict=outcome.verdict,
            max_cp_excursion_m=outcome.max_cp_excursion_m,
            time_to_settle_s=outcome.time_to_settle_s,
            cop_saturated_fraction=outcome.cop_saturated_fraction,
            step_capturable=outcome.step_capturable,
            runtime_s=runtime,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = HarnessArgumentParser(
        description="Capture point push recovery simulator"
    )
    parser.add_argument(
        "subcommand",
        choices=SUBCOMMANDS,
        help="run one scenario, sweep a grid, search the envelope, or validate a scenario file"
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="Path to scenario file"
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=Path("results"),
        help="Output directory (default: results)"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a scenario value; repeatable. In sweep, separate alternatives with '|'"
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        help="Suppress progress output"
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Worker processes for sweeps and envelope ladders (default: 1)"
    )
    return parser


def run_cli(request: CliRequest, app_config: Optional[Config] = None) -> int:
    """
    Execute a parsed request.

    Returns:
        Exit status: 0 success, 1 usage, 2 config error, 3 runtime error
    """
    app_config = app_config or Config()
    if request.subcommand not in SUBCOMMANDS:
        print(f"Error: unknown subcommand '{request.subcommand}'. Choose from {', '.join(SUBCOMMANDS)}",
              file=sys.stderr)
        return EXIT_USAGE
    if request.config_path is None:
        print(f"Error: {request.subcommand} requires --config", file=sys.stderr)
        return EXIT_USAGE

    harness = PushRecoveryHarness(app_config, quiet=request.quiet)
    config_path = Path(request.config_path)
    output_dir = Path(request.output_dir)
    try:
        if request.subcommand == "validate":
            result = harness.validate(config_path, request.overrides)
            return EXIT_OK if result.is_valid else EXIT_CONFIG
        if request.subcommand == "run":
            harness.run(config_path, output_dir, request.overrides)
        elif request.subcommand == "sweep":
            harness.sweep(config_path, output_dir, request.overrides, request.workers)
        else:
            harness.envelope(config_path, output_dir, request.overrides, request.workers)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioConfigError as e:
        print(f"Error: invalid scenario {config_path}:", file=sys.stderr)
        for issue in e.issues:
            print(f"  - {issue}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OSError) as e:
        logger.debug("Run aborted", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    config = Config()
    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.workers < 1:
        parser.print_usage(sys.stderr)
        print("Error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE

    request = CliRequest(
        subcommand=args.subcommand,
        config_path=str(args.config) if args.config is not None else None,
        output_dir=str(args.out),
        overrides=args.overrides,
        quiet=args.quiet,
        workers=args.workers,
    )
    return run_cli(request, config)


if __name__ == "__main__":
    sys.exit(main())
