import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsadm.gridio import (ensure_dir, load_grid, read_json, save_grid,
                          sha256_file, write_json)


def test_round_trip(tmp_path, rng):
    values = rng.uniform(0, 80, size=(16, 12))
    valid = rng.uniform(size=(16, 12)) < 0.7
    path = tmp_path / "grid.dm"
    save_grid(path, values, valid, "dm")
    out_values, out_valid, kind = load_grid(path)
    assert kind == "dm"
    assert np.array_equal(out_valid, valid)
    assert np.array_equal(out_values, values.astype(np.float32).astype(np.float64))


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, w, h, seed):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((w, h)) * 10
    valid = rng.uniform(size=(w, h)) < 0.5
    path = tmp_path_factory.mktemp("grids") / "g.dm"
    save_grid(path, values, valid, "var")
    out_values, out_valid, kind = load_grid(path)
    assert kind == "var"
    assert np.array_equal(out_valid, valid)
    assert np.allclose(out_values, values, rtol=1e-6, atol=1e-5)


def test_save_is_deterministic(tmp_path, rng):
    values = rng.uniform(0, 80, size=(8, 8))
    valid = np.ones((8, 8), dtype=bool)
    save_grid(tmp_path / "a.dm", values, valid, "dm")
    save_grid(tmp_path / "b.dm", values, valid, "dm")
    assert (tmp_path / "a.dm").read_bytes() == (tmp_path / "b.dm").read_bytes()


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_grid(tmp_path / "x.dm", np.zeros((2, 2)), np.ones((2, 2), bool),
                  "mystery")


def test_truncated_payload_detected(tmp_path):
    path = tmp_path / "t.dm"
    save_grid(path, np.zeros((4, 4)), np.ones((4, 4), bool), "dm")
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(ValueError, match="truncated"):
        load_grid(path)


def test_corrupt_header_detected(tmp_path):
    path = tmp_path / "c.dm"
    path.write_bytes(b"\xff\xfe not json\n" + b"\x00" * 64)
    with pytest.raises(ValueError, match="corrupt|unknown"):
        load_grid(path)


def test_sha256_file_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"abc" * 1000)
    assert sha256_file(path) == hashlib.sha256(b"abc" * 1000).hexdigest()


def test_json_helpers_round_trip_and_stable(tmp_path):
    obj = {"b": [1, 2.5, "x"], "a": {"nested": True}}
    p1 = tmp_path / "one.json"
    p2 = tmp_path / "two.json"
    write_json(p1, obj)
    write_json(p2, obj)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().endswith("\n")
    assert read_json(p1) == obj
    assert json.loads(p1.read_text()) == obj


def test_ensure_dir_idempotent(tmp_path):
    target = tmp_path / "a" / "b"
    ensure_dir(target)
    ensure_dir(target)
    assert target.is_dir()
