"""
Tests for CFF1 snapshots, YAML manifests, CSV export and SVG figures
"""

import csv
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from inverse_cascade.errors import RankError, SnapshotError
from inverse_cascade.plots import plot_field, plot_picard
from inverse_cascade.snapshot import (
    HEADER,
    MAGIC,
    decode_snapshot,
    encode_snapshot,
    export_csv,
    read_manifest,
    read_snapshot,
    write_manifest,
    write_snapshot,
)
from inverse_cascade.spectral_core import Grid2D, Rank, random_field, to_physical


def sample(rank: Rank = Rank.VECTOR, n: int = 8):
    return random_field(Grid2D(n), rank, np.random.default_rng(1), bandwidth=2)


class TestSnapshotFormat:
    """Test the binary layout."""

    def test_header(self):
        """Magic, u32 nx, u32 ny and the rank tag, little-endian."""
        data = encode_snapshot(sample(Rank.SYMTENSOR))
        assert HEADER.size == 13
        assert data[:4] == MAGIC
        assert struct.unpack_from("<IIB", data, 4) == (8, 8, 2)
        assert len(data) == 13 + 3 * 8 * 8 * 16

    def test_decode(self):
        """Decoding restores grid, rank and coefficients exactly."""
        f = sample()
        g = decode_snapshot(encode_snapshot(f))
        assert g.grid == f.grid
        assert g.rank is Rank.VECTOR
        np.testing.assert_array_equal(g.coeffs, f.coeffs)

    def test_bad_magic(self):
        """Files not starting with CFF1 are rejected."""
        data = encode_snapshot(sample())
        with pytest.raises(SnapshotError):
            decode_snapshot(b"CFF2" + data[4:])

    @pytest.mark.parametrize("cut", [5, 13, 100])
    def test_truncated(self, cut):
        """Short headers and payloads are rejected."""
        data = encode_snapshot(sample())
        with pytest.raises(SnapshotError):
            decode_snapshot(data[:cut])

    def test_unknown_rank(self):
        """Rank tags other than 0, 1 and 2 raise RankError."""
        data = HEADER.pack(MAGIC, 4, 4, 7) + bytes(16 * 16)
        with pytest.raises(RankError):
            decode_snapshot(data)


class TestFiles:
    """Test writing snapshots, manifests and exports."""

    def test_write_and_read(self):
        """write_snapshot creates parent directories."""
        f = sample(Rank.SCALAR)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_snapshot(Path(tmpdir) / "snapshots" / "level0_hbar.cff", f)
            np.testing.assert_array_equal(read_snapshot(path).coeffs, f.coeffs)

    def test_manifest(self):
        """Manifests keep key order and read back as mappings."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_manifest(Path(tmpdir) / "ladder.yml", {"N": {"1,0": 1}, "delta0": 0.25})
            assert path.read_text(encoding="utf-8").startswith("N:")
            assert read_manifest(path) == {"N": {"1,0": 1}, "delta0": 0.25}
            empty = Path(tmpdir) / "empty.yml"
            empty.write_text("", encoding="utf-8")
            assert read_manifest(empty) == {}

    def test_export_csv(self):
        """One row per grid point with the physical values of every component."""
        f = sample(Rank.VECTOR, 4)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = export_csv(f, Path(tmpdir) / "v.csv")
            with open(path, "r", encoding="utf-8", newline="") as handle:
                rows = list(csv.reader(handle))
        assert rows[0] == ["x1", "x2", "c0", "c1"]
        assert len(rows) == 1 + 16
        values = to_physical(f)
        assert float(rows[1][2]) == values[0, 0, 0]
        assert float(rows[2][1]) == pytest.approx(np.pi / 2)


class TestPlots:
    """Test the SVG figures."""

    def test_field_figure(self):
        """plot_field writes an SVG file."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = plot_field(sample(), Path(tmpdir) / "figures" / "v.svg", "v")
            assert path.exists()
            assert "<svg" in path.read_text(encoding="utf-8")

    def test_reruns_are_identical(self):
        """Figures carry no timestamp and fixed ids."""
        with tempfile.TemporaryDirectory() as tmpdir:
            first = plot_picard([1.0, 0.1, 0.01], Path(tmpdir) / "a.svg", 1e-12)
            second = plot_picard([1.0, 0.1, 0.01], Path(tmpdir) / "b.svg", 1e-12)
            assert first.read_bytes() == second.read_bytes()
