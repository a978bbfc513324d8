"""
CFF1 field snapshots and YAML run manifests.

A snapshot is the magic ``CFF1``, then little-endian u32 nx, u32 ny, u8 rank tag,
then the Fourier coefficients as interleaved little-endian f64 (re, im), components
outermost and modes in the row-major FFT order of Grid2D.
"""

import csv
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import yaml

from .errors import RankError, SnapshotError
from .spectral_core import Grid2D, Rank, SpectralField, to_physical

MAGIC = b"CFF1"
HEADER = struct.Struct("<4sIIB")


def encode_snapshot(f: SpectralField) -> bytes:
    header = HEADER.pack(MAGIC, f.grid.nx, f.grid.ny, f.rank.value)
    return header + np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()


def decode_snapshot(data: bytes) -> SpectralField:
    if len(data) < HEADER.size:
        raise SnapshotError(f"snapshot truncated: {len(data)} bytes")
    magic, nx, ny, tag = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    try:
        rank = Rank(tag)
    except ValueError as e:
        raise RankError(f"unknown rank tag {tag}") from e
    grid = Grid2D(nx, ny)
    expected = rank.components * nx * ny * 16
    payload = data[HEADER.size :]
    if len(payload) != expected:
        raise SnapshotError(f"payload holds {len(payload)} bytes, expected {expected}")
    coeffs = np.frombuffer(payload, dtype="<c16").reshape(rank.components, nx, ny).astype(np.complex128)
    return SpectralField(grid, rank, coeffs)


def write_snapshot(path: Union[str, Path], f: SpectralField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_snapshot(f))
    logging.debug(f"snapshot {path.name}: {f.rank.name} on {f.grid.nx}^2")
    return path


def read_snapshot(path: Union[str, Path]) -> SpectralField:
    return decode_snapshot(Path(path).read_bytes())


def write_manifest(path: Union[str, Path], entries: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(entries, f, sort_keys=False)
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def export_csv(f: SpectralField, path: Union[str, Path]) -> Path:
    """Physical grid values, one row per grid point: x1, x2, then each component."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x1, x2 = f.grid.coordinates
    values = to_physical(f)
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["x1", "x2"] + [f"c{i}" for i in range(f.rank.components)])
        for i in range(f.grid.nx):
            for j in range(f.grid.ny):
                writer.writerow(["%.17g" % v for v in (x1[i, j], x2[i, j], *values[:, i, j])])
    return path
