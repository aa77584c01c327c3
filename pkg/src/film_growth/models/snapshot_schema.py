"""
Binary snapshot layout.

    header:  magic b"TFGS" | u16 version | u32 record count
    record:  f8 t | u8 basis tag | f8 L | f8 nu | u32 N | f8 coefficients[rows * N]

Little-endian throughout; rows is 2 for periodic fields and 1 for Neumann fields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core.spectral import BasisSpec, BoundaryCondition, SpectralField
from ..utils.errors import BasisError, SnapshotError

MAGIC = b"TFGS"
SNAPSHOT_VERSION = 1

_HEADER = struct.Struct("<4sHI")
_RECORD = struct.Struct("<dBddI")


@dataclass(frozen=True)
class SnapshotRecord:
    t: float
    nu: float
    u: SpectralField

    def to_dict(self) -> dict:
        return {"t": self.t, "nu": self.nu, **self.u.basis.to_dict()}


def encode_snapshot(records: list[SnapshotRecord]) -> bytes:
    parts = [_HEADER.pack(MAGIC, SNAPSHOT_VERSION, len(records))]
    for record in records:
        basis = record.u.basis
        parts.append(
            _RECORD.pack(record.t, basis.boundary.tag, basis.length, record.nu, basis.truncation)
        )
        parts.append(np.ascontiguousarray(record.u.coefficients, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_snapshot(blob: bytes) -> list[SnapshotRecord]:
    if len(blob) < _HEADER.size:
        raise SnapshotError("Snapshot shorter than its header", {"bytes": len(blob)})
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise SnapshotError("Not a snapshot file", {"magic": magic.hex()})
    if version != SNAPSHOT_VERSION:
        raise SnapshotError("Unsupported snapshot version", {"version": version})

    offset = _HEADER.size
    records = []
    for index in range(count):
        if offset + _RECORD.size > len(blob):
            raise SnapshotError("Truncated snapshot record", {"record": index})
        t, tag, length, nu, N = _RECORD.unpack_from(blob, offset)
        offset += _RECORD.size
        try:
            basis = BasisSpec(BoundaryCondition.from_tag(tag), length, N)
        except BasisError as e:
            raise SnapshotError(f"Invalid basis in record {index}: {e.message}", e.context) from e
        size = basis.rows * N
        end = offset + 8 * size
        if end > len(blob):
            raise SnapshotError("Truncated coefficient block", {"record": index})
        coeffs = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(basis.rows, N)
        offset = end
        records.append(SnapshotRecord(t=t, nu=nu, u=SpectralField(basis, coeffs.astype(float))))
    if offset != len(blob):
        raise SnapshotError("Trailing bytes after the last record", {"extra": len(blob) - offset})
    return records
