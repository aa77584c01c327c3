import json
import logging
from pathlib import Path
from typing import Any

import pandas as pd

from ..models.schema import ArtifactEntry, RunManifest
from ..models.snapshot_schema import SnapshotRecord, encode_snapshot
from .export_standards import (
    REPRODUCIBLE_EXPORT_STANDARD,
    ExportMetadata,
    ExportStandard,
    file_digest,
    json_safe,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunExporter:
    """
    Single writer for every artifact of one run.

    Each file written through the exporter is recorded with its SHA-256 digest
    so the manifest can index the complete output directory.
    """

    def __init__(
        self, output_dir: str | Path, standard: ExportStandard = REPRODUCIBLE_EXPORT_STANDARD
    ):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.standard = standard
        self.written: dict[str, ExportMetadata] = {}

    def _record(self, path: Path, record_count: int, fmt: str) -> ExportMetadata:
        relative = path.relative_to(self.output_dir).as_posix()
        metadata = ExportMetadata(
            path=relative,
            record_count=record_count,
            export_version=self.standard.export_version,
            format=fmt,
            sha256=file_digest(path),
        )
        self.written[relative] = metadata
        logger.debug("Wrote %s (%d records, %s)", relative, record_count, metadata.sha256[:12])
        return metadata

    def write_series(
        self, frame: pd.DataFrame, seed: int, prefix: str = "series"
    ) -> ExportMetadata:
        """Write one trajectory's (t, probe...) table as ``<prefix>_seed<k>.csv``."""
        path = self.output_dir / f"{prefix}_seed{seed}.csv"
        frame.to_csv(
            path,
            index=False,
            float_format=self.standard.float_format,
            encoding=self.standard.encoding,
            lineterminator=self.standard.line_terminator,
        )
        return self._record(path, len(frame), "csv")

    def write_report(self, name: str, payload: dict[str, Any]) -> ExportMetadata:
        """Write a JSON report with sorted keys; NaN and infinities become null."""
        path = self.output_dir / f"{name}.json"
        text = json.dumps(
            json_safe(payload), sort_keys=True, indent=self.standard.json_indent, allow_nan=False
        )
        path.write_text(text + "\n", encoding=self.standard.encoding)
        return self._record(path, 1, "json")

    def write_snapshot(self, name: str, records: list[SnapshotRecord]) -> ExportMetadata:
        path = self.output_dir / f"{name}.bin"
        path.write_bytes(encode_snapshot(records))
        return self._record(path, len(records), "snapshot")

    def file_index(self) -> list[ArtifactEntry]:
        return [
            ArtifactEntry(
                path=meta.path,
                sha256=meta.sha256,
                size_bytes=(self.output_dir / meta.path).stat().st_size,
            )
            for meta in sorted(self.written.values(), key=lambda m: m.path)
        ]

    def write_manifest(self, manifest: RunManifest) -> Path:
        """Write manifest.json, indexing every artifact written so far."""
        manifest.files = self.file_index()
        path = self.output_dir / MANIFEST_NAME
        text = json.dumps(
            json_safe(manifest.to_dict()),
            sort_keys=True,
            indent=self.standard.json_indent,
            allow_nan=False,
        )
        path.write_text(text + "\n", encoding=self.standard.encoding)
        logger.info("Manifest written: %s (%d files)", path, len(manifest.files))
        return path


def verify_manifest(output_dir: str | Path) -> list[str]:
    """Paths listed in the manifest that are missing or whose digest no longer matches."""
    root = Path(output_dir)
    data = json.loads((root / MANIFEST_NAME).read_text(encoding="utf-8"))
    problems = []
    for entry in data.get("files", []):
        path = root / entry["path"]
        if not path.exists() or file_digest(path) != entry["sha256"]:
            problems.append(entry["path"])
    return problems
