import os

import numpy as np
import pytest

from tpdl import io
from tpdl.fields import FieldState, Grid


def test_config_hash_stable_and_order_free():
    a = io.config_hash({"a": 1, "b": 2.5})
    assert a == io.config_hash({"b": 2.5, "a": 1})
    assert len(a) == 16 and a != io.config_hash({"a": 1, "b": 2.6})


def test_csv_round_trip(tmp_path):
    path = tmp_path / "x.csv"
    io.write_csv(path, ["t", "v"], [[0.1, 1 / 3], {"t": 2, "v": np.float64(1e-300)}], "abc")
    text = path.read_text()
    assert text.splitlines()[0] == "# config_hash=abc"
    h, rows = io.read_csv(path)
    assert h == "abc"
    # repr keeps every bit of a float
    assert float(rows[0]["v"]) == 1 / 3 and float(rows[1]["v"]) == 1e-300


def test_read_csv_needs_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,v\n1,2\n")
    with pytest.raises(ValueError):
        io.read_csv(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    io.atomic_write_text(p, "one")
    io.atomic_write_text(p, "two")
    assert p.read_text() == "two"
    assert os.listdir(tmp_path / "sub") == ["f.txt"]


def test_failed_write_keeps_old_file(tmp_path):
    p = tmp_path / "f.bin"
    io.atomic_write_bytes(p, b"old")
    with pytest.raises(TypeError):
        io.atomic_write_bytes(p, "not bytes")
    assert p.read_bytes() == b"old"
    assert os.listdir(tmp_path) == ["f.bin"]


@pytest.mark.parametrize("dtype", [np.complex64, np.complex128])
def test_snapshot_round_trip(tmp_path, rng, dtype):
    grid = Grid(8 * np.pi, 8)
    arr = (rng.standard_normal((8,) + grid.spectral_shape)
           + 1j * rng.standard_normal((8,) + grid.spectral_shape)).astype(dtype)
    st = FieldState.from_stacked(arr, grid, 3.25)
    p = tmp_path / "s.snap"
    io.write_snapshot(p, st, "deadbeef")
    back, h = io.read_snapshot(p)
    assert h == "deadbeef" and back.time == 3.25
    assert back.grid.M == 8 and back.grid.L == grid.L
    assert back.stacked().dtype == dtype
    np.testing.assert_array_equal(back.stacked(), arr)


def test_snapshot_rejects_other_files(tmp_path):
    p = tmp_path / "s.snap"
    p.write_bytes(b"\0" * 200)
    with pytest.raises(ValueError):
        io.read_snapshot(p)
