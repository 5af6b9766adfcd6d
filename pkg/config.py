"""
Application settings for the push recovery harness.
"""
from dataclasses import dataclass


@dataclass
class Config:
    """
    Application configuration settings.

    Centralizes harness parameters that are not part of a scenario:
    - Output naming and number formatting
    - Envelope search bracket and tolerance
    - Parallelism and logging
    """

    # Output settings
    trajectory_csv: str = "trajectory.csv"
    summary_workbook: str = "summary.xlsx"
    envelope_csv: str = "envelope.csv"
    sweep_csv: str = "sweep_summary.csv"
    csv_float_format: str = "%.10g"
    output_sheet_scenarios: str = "Scenarios"
    output_sheet_envelope: str = "Envelope"

    # Envelope search (N*s)
    envelope_tolerance_Ns: float = 1e-3
    envelope_initial_impulse_Ns: float = 1.0
    envelope_max_impulse_Ns: float = 20.0
    default_push_time_s: float = 0.1

    workers: int = 1
    log_level: str = "WARNING"

    def __post_init__(self):
        """Reject a search bracket that cannot be expanded."""
        if self.envelope_initial_impulse_Ns <= 0:
            raise ValueError("envelope_initial_impulse_Ns must be positive")
        if self.envelope_max_impulse_Ns < self.envelope_initial_impulse_Ns:
            raise ValueError("envelope_max_impulse_Ns must not be below the initial impulse")
