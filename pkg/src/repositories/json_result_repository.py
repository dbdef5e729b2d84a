"""
JSON-based implementation of ResultRepository.
"""
import csv
import json
import logging
import os
from typing import Any, Iterable, List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src.core.exceptions import InvalidConfigError
from src.data.experiment_models import ExperimentConfig, ModelConfig, RunSummary, SamplerConfig
from src.interfaces.result_repository import ResultRepository


logger = logging.getLogger(__name__)

_KNOWN_KEYS = {
    (): set(ExperimentConfig.model_fields),
    ("model",): set(ModelConfig.model_fields),
    ("sampler",): set(SamplerConfig.model_fields),
}


def _line_of(text: str, keys: Sequence[Any]) -> int:
    """1-based line of the innermost key of ``keys`` found in order; 1 if none."""
    lines = text.splitlines()
    found = 0
    for key in keys:
        if not isinstance(key, str):
            continue
        needle = f'"{key}"'
        for index in range(found, len(lines)):
            if needle in lines[index]:
                found = index
                break
    return found + 1


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _describe(error: dict) -> Tuple[Tuple[Any, ...], str]:
    location = tuple(error.get("loc", ()))
    if error.get("type") == "missing":
        message = "missing field"
    else:
        message = error.get("msg", "invalid value")
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
    return location, message


class JsonResultRepository(ResultRepository):
    """
    Repository reading JSON experiment configs and writing JSON summaries and
    comma-separated tables. Summaries are written with sorted keys so equal
    results give equal bytes.
    """

    def __init__(self, indent: int = 2):
        self.indent = indent

    def exists(self, path: str) -> bool:
        return os.path.exists(path)

    def _problems(self, path: str, text: str) -> Tuple[List[str], Any]:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            return [f"{path}:{e.lineno}: malformed JSON: {e.msg}"], None
        if not isinstance(raw, dict):
            return [f"{path}:1: the configuration must be a JSON object"], None

        for prefix, known in _KNOWN_KEYS.items():
            section = raw
            for key in prefix:
                section = section.get(key, {}) if isinstance(section, dict) else {}
            if isinstance(section, dict):
                for key in sorted(set(section) - known):
                    logger.warning(f"{path}:{_line_of(text, prefix + (key,))}: ignoring unknown key {key!r}")

        try:
            return [], ExperimentConfig.model_validate(raw)
        except ValidationError as e:
            problems = []
            for error in e.errors():
                location, message = _describe(error)
                if location:
                    dotted = ".".join(str(part) for part in location)
                    problems.append(f"{path}:{_line_of(text, location)}: {dotted}: {message}")
                    continue
                # Cross-field problems arrive joined; each starts with its field name.
                for problem in message.split("; "):
                    field = problem.split(":", 1)[0]
                    problems.append(f"{path}:{_line_of(text, (field,))}: {problem}")
            return problems, None

    def load_config(self, path: str) -> ExperimentConfig:
        """
        Load and validate an experiment configuration.

        Args:
            path: Path to the JSON file

        Returns:
            ExperimentConfig: The validated configuration

        Raises:
            InvalidConfigError: With one ``path:line: problem`` entry per problem
        """
        if not self.exists(path):
            raise InvalidConfigError([f"{path}:1: file not found"])
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        problems, config = self._problems(path, text)
        if problems:
            raise InvalidConfigError(problems)
        logger.info(f"Loaded {config.kind.value} configuration from {path}")
        return config

    def validate_config(self, path: str) -> List[str]:
        try:
            self.load_config(path)
        except InvalidConfigError as e:
            return e.problems
        return []

    def save_summary(self, summary: RunSummary, path: str) -> str:
        """
        Save a run summary as JSON with sorted keys.

        Args:
            summary: The summary to save
            path: Destination file

        Returns:
            str: The path written
        """
        os.makedirs(os.path.dirname(path) if os.path.dirname(path) else '.', exist_ok=True)
        payload = summary.model_dump(mode="json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=self.indent, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        logger.info(f"Saved summary to {path}")
        return path

    def load_summary(self, path: str) -> RunSummary:
        with open(path, "r", encoding="utf-8") as f:
            return RunSummary.model_validate(json.load(f))

    def write_table(self, path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        os.makedirs(os.path.dirname(path) if os.path.dirname(path) else '.', exist_ok=True)
        count = 0
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
                count += 1
        logger.info(f"Wrote {count} rows to {path}")
        return path
