"""
Exception types raised by the push recovery simulator.
"""
from typing import List

from models import ConfigIssue


class ScenarioConfigError(ValueError):
    """Scenario text could not be turned into a valid ScenarioConfig."""

    def __init__(self, issues: List[ConfigIssue]):
        self.issues = issues
        super().__init__("; ".join(str(issue) for issue in issues))


class IntegrationError(RuntimeError):
    """The simulated state left the finite domain."""


class OutputError(OSError):
    """An output artifact could not be written."""
