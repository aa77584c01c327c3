"""
Optional SQLite ledger of dispatched runs.

One row per run id. Re-recording a run id updates its completion fields, so a
runner can record the start of a long ensemble and overwrite the row when it ends.
"""

import logging
import sqlite3
from contextlib import closing
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    command TEXT NOT NULL,
    seed INTEGER NOT NULL,
    config_digest TEXT NOT NULL,
    started_at TEXT NOT NULL,
    finished_at TEXT,
    exit_code INTEGER,
    passed INTEGER,
    duration_ms INTEGER DEFAULT 0,
    output_dir TEXT
);
CREATE INDEX IF NOT EXISTS idx_runs_digest ON runs(config_digest);
CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command, started_at);
"""

# columns a repeated record of the same run id may overwrite
COMPLETION_COLUMNS = ("finished_at", "exit_code", "passed", "duration_ms", "output_dir")


@dataclass
class RunRecord:
    run_id: str
    command: str
    seed: int
    config_digest: str
    started_at: str
    finished_at: str | None = None
    exit_code: int | None = None
    passed: bool | None = None
    duration_ms: int = 0
    output_dir: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _upsert_statement() -> str:
    columns = [f.name for f in fields(RunRecord)]
    updates = ", ".join(f"{c}=excluded.{c}" for c in COMPLETION_COLUMNS)
    return (
        f"INSERT INTO runs ({', '.join(columns)}) "
        f"VALUES ({', '.join(':' + c for c in columns)}) "
        f"ON CONFLICT(run_id) DO UPDATE SET {updates}"
    )


class RunRegistry:
    """Ledger of runs keyed by run id, queried by configuration digest or command."""

    def __init__(self, db_path: str | Path = "film_growth_runs.db"):
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        with closing(self._connect()) as conn, conn:
            conn.executescript(SCHEMA)
        logger.info("Run registry at %s", self.db_path)

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path, timeout=5.0)
        conn.row_factory = sqlite3.Row
        try:
            conn.execute("PRAGMA journal_mode=WAL;")
        except sqlite3.Error:
            # WAL is unavailable on some network filesystems
            logger.debug("WAL journal not available for %s", self.db_path)
        return conn

    def record_run(self, record: RunRecord) -> bool:
        """Insert a run or update the completion fields of an existing one."""
        row = record.to_dict()
        if row["passed"] is not None:
            row["passed"] = int(row["passed"])
        try:
            with closing(self._connect()) as conn, conn:
                conn.execute(_upsert_statement(), row)
            return True
        except sqlite3.Error as e:
            logger.error("Error recording run %s: %s", record.run_id, e)
            return False

    def get_run(self, run_id: str) -> dict[str, Any] | None:
        rows = self._select("WHERE run_id = :run_id", {"run_id": run_id})
        return rows[0] if rows else None

    def get_runs(
        self,
        limit: int = 50,
        config_digest: str | None = None,
        command: str | None = None,
    ) -> list[dict[str, Any]]:
        """Most recent runs first, optionally filtered by configuration digest or command."""
        clauses = []
        params: dict[str, Any] = {"limit": limit}
        if config_digest:
            clauses.append("config_digest = :config_digest")
            params["config_digest"] = config_digest
        if command:
            clauses.append("command = :command")
            params["command"] = command
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        return self._select(f"{where} ORDER BY started_at DESC, run_id DESC LIMIT :limit", params)

    def _select(self, tail: str, params: dict[str, Any]) -> list[dict[str, Any]]:
        try:
            with closing(self._connect()) as conn:
                cursor = conn.execute(f"SELECT * FROM runs {tail}", params)  # noqa: S608
                return [dict(row) for row in cursor.fetchall()]
        except sqlite3.Error as e:
            logger.error("Error reading run registry %s: %s", self.db_path, e)
            return []
