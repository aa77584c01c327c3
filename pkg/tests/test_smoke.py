import math
from pathlib import Path

import pandas as pd

from src.film_growth.core.exporters import RunExporter, verify_manifest
from src.film_growth.core.run_registry import RunRecord, RunRegistry
from src.film_growth.core.spectral import BasisSpec, BoundaryCondition, smooth_field
from src.film_growth.models.schema import RunManifest
from src.film_growth.models.snapshot_schema import SnapshotRecord


def test_registry_insert_and_artifact_export(tmp_path):
    registry = RunRegistry(tmp_path / "runs.db")

    # Record a run
    record = RunRecord(
        run_id="run_smoke",
        command="simulate",
        seed=7,
        config_digest="abc123",
        started_at="2026-01-01T00:00:00",
        finished_at="2026-01-01T00:00:01",
        exit_code=0,
        passed=True,
        duration_ms=1000,
        output_dir=str(tmp_path / "out"),
    )
    assert registry.record_run(record)

    # Fetch it back
    rows = registry.get_runs(limit=5, config_digest="abc123")
    assert any(r.get("run_id") == "run_smoke" for r in rows)
    assert rows[0]["passed"] == 1
    assert registry.get_runs(command="verify-phi") == []

    # Update in place on conflict
    record.exit_code = 1
    record.passed = False
    assert registry.record_run(record)
    assert registry.get_run("run_smoke")["exit_code"] == 1
    assert len(registry.get_runs()) == 1

    # Export artifacts and index them
    exporter = RunExporter(tmp_path / "out")
    frame = pd.DataFrame({"t": [0.1, 0.2], "u_l2_sq": [1.0, math.nan]})
    exporter.write_series(frame, seed=7)
    exporter.write_report("summary", {"value": math.inf, "items": [1, 2]})
    basis = BasisSpec(BoundaryCondition.NEUMANN, 2 * math.pi, 4)
    exporter.write_snapshot("final_state", [SnapshotRecord(1.0, 1.0, smooth_field(basis))])
    exporter.write_manifest(RunManifest("run_smoke", "simulate", {}, "1.0", "2026-01-01T00:00:00"))

    out = Path(tmp_path / "out")
    assert (out / "series_seed7.csv").exists()
    assert '"value": null' in (out / "summary.json").read_text()
    assert verify_manifest(out) == []

    (out / "summary.json").write_text("{}\n")
    assert verify_manifest(out) == ["summary.json"]
