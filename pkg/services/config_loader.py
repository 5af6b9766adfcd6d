"""
Scenario loading service for the line-oriented experiment format.

Format:
    # comment
    [robot]
    mass_kg = 3.6
    [controller.ankle_gains]
    kp = 1.0
    [push]
    time_s = 0.1
    impulse_Ns = 1.8, 0.0

Sections are dotted paths into ScenarioConfig. Every [push] section appends
one push. Vectors are comma separated.
"""
import itertools
import typing
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel, ValidationError

from exceptions import ScenarioConfigError
from models import ConfigIssue, PushEvent, ScenarioConfig

PUSH_SECTION = "push"
SWEEP_SEPARATOR = "|"


def _model_type(annotation: Any) -> Optional[Type[BaseModel]]:
    """BaseModel class behind an annotation such as Optional[PdGains]."""
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    for arg in typing.get_args(annotation):
        if isinstance(arg, type) and issubclass(arg, BaseModel):
            return arg
    return None


def _is_vector(annotation: Any) -> bool:
    return typing.get_origin(annotation) is tuple


class ScenarioLoaderService:
    """
    Service responsible for turning scenario text plus command-line
    overrides into a validated ScenarioConfig.
    Precedence: override > file > default.
    """

    def load_from_file(self, file_path: Path, overrides: Sequence[str] = ()) -> ScenarioConfig:
        """
        Load a scenario file.

        Raises:
            FileNotFoundError: If file doesn't exist
            ScenarioConfigError: If the scenario is invalid
        """
        if not file_path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")
        return self.parse_config(file_path.read_text(encoding="utf-8"), overrides)

    def parse_config(self, text: str, overrides: Sequence[str] = ()) -> ScenarioConfig:
        """
        Parse and validate scenario text.

        Args:
            text: Scenario file contents
            overrides: "section.key=value" strings applied after the file

        Returns:
            Fully validated ScenarioConfig

        Raises:
            ScenarioConfigError: listing every issue with its line number
        """
        tree: Dict[str, Any] = ScenarioConfig().model_dump()
        tree['pushes'] = []
        lines: Dict[Tuple, int] = {}
        issues: List[ConfigIssue] = []

        section: Optional[Tuple] = None
        model: Optional[Type[BaseModel]] = None
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith(('#', ';')):
                continue
            if line.startswith('[') and line.endswith(']'):
                name = line[1:-1].strip().lower()
                try:
                    section, model = self._open_section(tree, name)
                    lines[section] = number
                except ValueError as e:
                    section, model = None, None
                    issues.append(ConfigIssue(line=number, key=name, message=str(e)))
                continue
            if '=' not in line:
                issues.append(ConfigIssue(line=number, message=f"Expected 'key = value', got '{line}'"))
                continue
            key, value = (part.strip() for part in line.split('=', 1))
            if section is None:
                issues.append(ConfigIssue(line=number, key=key, message="Key outside of a valid section"))
                continue
            try:
                self._assign(tree, section, model, key, value)
                lines[section + (key,)] = number
            except ValueError as e:
                issues.append(ConfigIssue(line=number, key=key, message=str(e)))

        for override in overrides:
            try:
                name, key, value = self.parse_override(override)
                if name == PUSH_SECTION:
                    if not tree['pushes']:
                        self._open_section(tree, PUSH_SECTION)
                    section, model = ('pushes', 0), PushEvent
                else:
                    section, model = self._resolve(name)
                self._assign(tree, section, model, key, value)
                lines.pop(section + (key,), None)
            except ValueError as e:
                issues.append(ConfigIssue(line=None, key=override, message=str(e)))

        if issues:
            raise ScenarioConfigError(issues)

        try:
            return ScenarioConfig.model_validate(tree)
        except ValidationError as e:
            raise ScenarioConfigError([self._issue_from_error(error, lines) for error in e.errors()])

    def parse_override(self, override: str) -> Tuple[str, str, str]:
        """Split 'section.key=value' into its parts."""
        if '=' not in override:
            raise ValueError(f"Override must look like section.key=value, got '{override}'")
        path, value = (part.strip() for part in override.split('=', 1))
        if '.' not in path:
            raise ValueError(f"Override key must name a section, got '{path}'")
        name, key = path.rsplit('.', 1)
        return name.lower(), key, value

    def expand_sweep(self, overrides: Sequence[str]) -> List[List[str]]:
        """
        Cartesian grid of overrides whose values list alternatives separated by '|'.
        Grid order follows the order of the overrides and of their values.
        """
        axes = []
        for override in overrides:
            if '=' not in override:
                raise ValueError(f"Override must look like section.key=value, got '{override}'")
            path, values = override.split('=', 1)
            axes.append([f"{path}={value.strip()}" for value in values.split(SWEEP_SEPARATOR)])
        return [list(point) for point in itertools.product(*axes)]

    def _open_section(self, tree: Dict[str, Any], name: str) -> Tuple[Tuple, Type[BaseModel]]:
        if name == PUSH_SECTION:
            tree['pushes'].append(PushEvent().model_dump())
            return ('pushes', len(tree['pushes']) - 1), PushEvent
        section, model = self._resolve(name)
        node = tree
        for part in section:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        return section, model

    def _resolve(self, name: str) -> Tuple[Tuple, Type[BaseModel]]:
        model: Type[BaseModel] = ScenarioConfig
        parts = tuple(name.split('.'))
        for part in parts:
            field = model.model_fields.get(part)
            nested = _model_type(field.annotation) if field is not None else None
            if nested is None or part == 'pushes':
                raise ValueError(f"Unknown section '{name}'")
            model = nested
        return parts, model

    def _assign(self, tree: Dict[str, Any], section: Tuple, model: Type[BaseModel], key: str, value: str) -> None:
        field = model.model_fields.get(key)
        if field is None or _model_type(field.annotation) is not None:
            known = sorted(k for k, f in model.model_fields.items() if _model_type(f.annotation) is None)
            raise ValueError(f"Unknown key '{key}'. Known keys: {known}")

        if _is_vector(field.annotation):
            parsed: Any = [part.strip() for part in value.split(',')]
            if len(parsed) != 2:
                raise ValueError(f"'{key}' needs two comma-separated values, got '{value}'")
        elif value.lower() in ('none', 'null') and type(None) in typing.get_args(field.annotation):
            parsed = None
        else:
            parsed = value

        node = tree
        for part in section:
            if node[part] is None:
                node[part] = {}
            node = node[part]
        node[key] = parsed

    def _issue_from_error(self, error: Dict[str, Any], lines: Dict[Tuple, int]) -> ConfigIssue:
        loc = tuple(error['loc'])
        key = ".".join(str(part) for part in loc)
        # Walk up to the nearest location that a line set
        line = None
        for depth in range(len(loc), 0, -1):
            if loc[:depth] in lines:
                line = lines[loc[:depth]]
                break
        message = error['msg']
        return ConfigIssue(line=line, key=key, message=message)
