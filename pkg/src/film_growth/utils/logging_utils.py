"""
Logging and configuration-loading utilities for the film-growth simulator.

Every record carries the run id and the dispatched command so that the logs
of concurrent runs written to one file can be told apart.
"""

import logging
from collections.abc import MutableMapping
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)-7s [%(run_id)s %(command)s] %(name)s: %(message)s"

# chatty at DEBUG while plots are rendered
QUIET_LOGGERS = ("matplotlib", "PIL")


class RunContextFilter(logging.Filter):
    """Stamps ``run_id`` and ``command`` on every record passing a handler."""

    def __init__(self, run_id: str, command: str) -> None:
        super().__init__()
        self.run_id = run_id
        self.command = command

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = self.run_id
        record.command = self.command
        return True


def setup_run_logging(
    run_id: str,
    command: str,
    level: str = "INFO",
    log_file: str | Path | None = None,
    console: bool = True,
) -> logging.Logger:
    """
    Reset the root logger for one run and return it.

    Args:
        run_id: Identifier shared with the manifest and the run registry
        command: Dispatched command, shown in every record
        level: Level name; unknown names fall back to INFO
        log_file: Optional extra destination, parent directories are created
        console: Whether to log to stderr
    """
    numeric_level = logging.getLevelName(level.upper())
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    root = logging.getLogger()
    root.setLevel(numeric_level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    handlers: list[logging.Handler] = []
    if console:
        handlers.append(logging.StreamHandler())
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path, encoding="utf-8"))

    context = RunContextFilter(run_id, command)
    formatter = logging.Formatter(LOG_FORMAT)
    for handler in handlers:
        handler.setLevel(numeric_level)
        handler.setFormatter(formatter)
        handler.addFilter(context)
        root.addHandler(handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(numeric_level, logging.WARNING))
    return root


class ContextAdapter(logging.LoggerAdapter):
    """Prefixes every message with ``key=value`` pairs (run id, command, seed...)."""

    def process(
        self, msg: Any, kwargs: MutableMapping[str, Any]
    ) -> tuple[Any, MutableMapping[str, Any]]:
        fields = self.extra or {}
        if not fields:
            return msg, kwargs
        prefix = " ".join(f"{key}={value}" for key, value in sorted(fields.items()))
        return f"[{prefix}] {msg}", kwargs


def log_context(logger: logging.Logger, **fields: Any) -> ContextAdapter:
    """Return an adapter that tags every record of ``logger`` with ``fields``."""
    return ContextAdapter(logger, fields)


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def load_config(config_path: str | Path, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Read a YAML run configuration into a plain mapping, deep-merging ``overrides``.

    An empty document yields ``{}``. Parse errors carry the 1-based line of the fault.
    """
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(f"Failed to parse {path.name}: {e.problem}", line=line) from e
    except (yaml.YAMLError, OSError) as e:
        raise ConfigError(f"Failed to load {path.name}: {e}") from e

    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError(f"{path.name}: configuration root must be a mapping")
    return deep_merge(data, overrides) if overrides else data
