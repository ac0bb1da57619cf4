"""Field round-tripping in two interchangeable containers.

Text container: flat CSV with columns ``index,value`` where index is the
row-major cell index, preceded by one comment line carrying the grid
metadata.  Binary container: 16-byte header

    bytes 0-3   magic b"HJF1"
    bytes 4-7   uint32 d           (little endian)
    bytes 8-11  uint32 n_per_axis  (little endian)
    bytes 12-15 uint32 payload length in bytes

followed by the cell values as little-endian float64 in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .grid import ScalarField, TorusGrid

__all__ = [
    "write_field_csv",
    "read_field_csv",
    "write_field_binary",
    "read_field_binary",
]

MAGIC = b"HJF1"
_HEADER = struct.Struct("<4sIII")


def write_field_csv(f: ScalarField, path) -> None:
    path = Path(path)
    flat = f.values.reshape(-1)
    with path.open("w") as out:
        out.write(f"# hjlab-field d={f.grid.d} n={f.grid.n_per_axis}\n")
        out.write("index,value\n")
        for i, v in enumerate(flat):
            out.write(f"{i},{float(v)!r}\n")


def read_field_csv(path) -> ScalarField:
    path = Path(path)
    with path.open() as src:
        header = src.readline().strip()
        if not header.startswith("# hjlab-field"):
            raise ParseError("missing field metadata line", str(path))
        meta = dict(tok.split("=") for tok in header.split()[2:])
        d, n = int(meta["d"]), int(meta["n"])
        if src.readline().strip() != "index,value":
            raise ParseError("missing index,value header", str(path))
        rows = [line.split(",") for line in src if line.strip()]
    grid = TorusGrid(d, n)
    values = np.empty(grid.n_cells)
    if len(rows) != grid.n_cells:
        raise ParseError(
            f"expected {grid.n_cells} rows, found {len(rows)}", str(path)
        )
    for idx_s, val_s in rows:
        values[int(idx_s)] = float(val_s)
    return ScalarField(grid, values.reshape(grid.shape))


def write_field_binary(f: ScalarField, path) -> None:
    payload = f.values.astype("<f8").tobytes(order="C")
    header = _HEADER.pack(MAGIC, f.grid.d, f.grid.n_per_axis, len(payload))
    Path(path).write_bytes(header + payload)


def read_field_binary(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("file shorter than header", str(path))
    magic, d, n, payload_len = _HEADER.unpack(raw[: _HEADER.size])
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", str(path))
    payload = raw[_HEADER.size :]
    if len(payload) != payload_len:
        raise ParseError(
            f"payload length {len(payload)} != header claim {payload_len}",
            str(path),
        )
    grid = TorusGrid(d, n)
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != grid.n_cells:
        raise ValidationError(
            f"payload holds {values.size} values, grid needs {grid.n_cells}"
        )
    return ScalarField(grid, values.reshape(grid.shape).astype(float))
