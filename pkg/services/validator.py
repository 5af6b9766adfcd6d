"""
Validation service for scenario files.
Reports every problem instead of stopping at the first one.
"""
from pathlib import Path
from typing import Sequence

from exceptions import ScenarioConfigError
from models import ValidationResult
from services.config_loader import ScenarioLoaderService


class ValidationService:
    """
    Service responsible for validating scenario text without running it.
    Never raises for bad input; problems are returned as error strings.
    """

    def __init__(self, loader: ScenarioLoaderService = None):
        self.loader = loader or ScenarioLoaderService()

    def validate_text(self, text: str, overrides: Sequence[str] = ()) -> ValidationResult:
        """
        Validate scenario text.

        Args:
            text: Scenario file contents
            overrides: Command-line overrides applied after the file

        Returns:
            ValidationResult containing the config (when valid) and any errors
        """
        try:
            config = self.loader.parse_config(text, overrides)
        except ScenarioConfigError as e:
            return ValidationResult(errors=[str(issue) for issue in e.issues])
        return ValidationResult(config=config, errors=[])

    def validate_file(self, file_path: Path, overrides: Sequence[str] = ()) -> ValidationResult:
        if not file_path.exists():
            return ValidationResult(errors=[f"File not found: {file_path}"])
        return self.validate_text(file_path.read_text(encoding="utf-8"), overrides)
