"""
Export standards for run artifacts.
"""

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

ARTIFACT_VERSION = "1.0"


@dataclass
class ExportMetadata:
    """Metadata for one written artifact."""

    path: str
    record_count: int
    export_version: str
    format: str
    sha256: str


@dataclass
class ExportStandard:
    """Formatting rules shared by every artifact of a run."""

    name: str
    float_format: str = "%.17g"
    encoding: str = "utf-8"
    json_indent: int = 2
    line_terminator: str = "\n"
    export_version: str = ARTIFACT_VERSION


# 17 significant digits round-trip every double exactly
REPRODUCIBLE_EXPORT_STANDARD = ExportStandard(name="reproducible")


def json_safe(value: Any) -> Any:
    """Plain-Python copy of ``value`` with numpy scalars unwrapped and non-finite floats as None."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [json_safe(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def file_digest(path: Path, chunk_size: int = 1 << 16) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while block := f.read(chunk_size):
            digest.update(block)
    return digest.hexdigest()
