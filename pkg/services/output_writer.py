"""
Output writer service for trajectory CSVs and summary workbooks.
"""
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from config import Config
from exceptions import OutputError
from models import SummaryReport, TrajectoryLog

TRAJECTORY_COLUMNS = [
    't', 'x_c', 'y_c', 'xd_c', 'yd_c', 'xi_x', 'xi_y', 'cop_x', 'cop_y',
    'cmp_x', 'cmp_y', 'hdot_x', 'hdot_y', 'fly_ang_x', 'fly_ang_y', 'sat_cop', 'sat_fly',
]
SCENARIO_COLUMNS = [
    'Scenario', 'Verdict', 'MaxCPExcursion_m', 'TimeToSettle_s', 'CoPSaturatedFraction',
    'StepCapturable', 'Runtime_s',
]


class OutputWriterService:
    """
    Service responsible for writing results to output files.
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        self.float_format = self.config.csv_float_format

    def trajectory_frame(self, log: TrajectoryLog) -> pd.DataFrame:
        rows = []
        for s in log.samples:
            rows.append({
                't': s.time_s,
                'x_c': s.com_m[0], 'y_c': s.com_m[1],
                'xd_c': s.com_vel_mps[0], 'yd_c': s.com_vel_mps[1],
                'xi_x': s.xi_m[0], 'xi_y': s.xi_m[1],
                'cop_x': s.cop_m[0], 'cop_y': s.cop_m[1],
                'cmp_x': s.cmp_m[0], 'cmp_y': s.cmp_m[1],
                'hdot_x': s.hdot_Nm[0], 'hdot_y': s.hdot_Nm[1],
                'fly_ang_x': s.flywheel_angle_rad[0], 'fly_ang_y': s.flywheel_angle_rad[1],
                'sat_cop': int(s.cop_saturated), 'sat_fly': int(s.flywheel_saturated),
            })
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)

    def emit_csv(self, log: TrajectoryLog, path: Path) -> None:
        """
        Write one row per logged sample under a fixed header.

        Raises:
            OutputError: If the file cannot be written
        """
        self.write_table(self.trajectory_frame(log), path)

    def write_table(self, frame: pd.DataFrame, path: Path) -> None:
        try:
            frame.to_csv(path, index=False, float_format=self.float_format, lineterminator="\n")
        except OSError as e:
            raise OutputError(f"Cannot write {path}: {e}") from e

    def write_summary(self, report: SummaryReport, output_file: Path) -> None:
        """
        Write scenario verdicts and envelope values to an Excel workbook.

        Args:
            report: Summary of the runs
            output_file: Path to output Excel file
        """
        scenarios: List[Dict] = []
        for scenario in report.scenarios:
            scenarios.append({
                'Scenario': scenario.name,
                'Verdict': scenario.verdict.value,
                'MaxCPExcursion_m': round(scenario.max_cp_excursion_m, 6),
                'TimeToSettle_s': scenario.time_to_settle_s,
                'CoPSaturatedFraction': round(scenario.cop_saturated_fraction, 4),
                'StepCapturable': scenario.step_capturable,
                'Runtime_s': round(scenario.runtime_s, 3),
            })
        envelopes = self.envelope_frame(report)

        try:
            with pd.ExcelWriter(output_file, engine='openpyxl') as writer:
                pd.DataFrame(scenarios, columns=SCENARIO_COLUMNS).to_excel(
                    writer, sheet_name=self.config.output_sheet_scenarios, index=False
                )
                envelopes.to_excel(writer, sheet_name=self.config.output_sheet_envelope, index=False)

                # Column width adjustments
                for sheet_name in writer.sheets:
                    worksheet = writer.sheets[sheet_name]
                    for column in worksheet.columns:
                        column_letter = column[0].column_letter
                        max_length = max(len(str(cell.value)) for cell in column if cell.value is not None) \
                            if any(cell.value is not None for cell in column) else 0
                        worksheet.column_dimensions[column_letter].width = min(max_length + 2, 50)
        except OSError as e:
            raise OutputError(f"Cannot write {output_file}: {e}") from e

    def envelope_frame(self, report: SummaryReport) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    'Strategy': result.label,
                    'Envelope_Ns': round(result.impulse_Ns, 6),
                    'Bounded': result.bounded,
                    'Evaluations': result.evaluations,
                }
                for result in report.envelopes
            ],
            columns=['Strategy', 'Envelope_Ns', 'Bounded', 'Evaluations'],
        )
