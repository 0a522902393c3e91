"""Binary container for beam-grid data.

One file holds one W x H grid: a single-line JSON header, then the values as
little-endian float32 in row-major order (azimuth-major: row i is an azimuth
index, column j an elevation index), then a validity byte-grid (one byte per
cell, 0 or 1). The same container carries distance matrices (kind "dm") and
the per-beam statistics maps (kinds "snr", "var", "detp").
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

GRID_KINDS = ("dm", "snr", "var", "detp")


def save_grid(path, values, valid, kind):
    """Write a grid file. values: (W, H) float array, valid: (W, H) bool."""
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if kind not in GRID_KINDS:
        raise ValueError(f"unknown grid kind {kind!r}, expected one of {GRID_KINDS}")
    if values.ndim != 2 or values.shape != valid.shape:
        raise ValueError(f"values/valid shape mismatch: {values.shape} vs {valid.shape}")
    if not np.isfinite(values).all():
        raise ValueError("grid values must be finite")
    w, h = values.shape
    header = json.dumps({"kind": kind, "w": w, "h": h, "dtype": "<f4"})
    payload = values.astype("<f4").tobytes(order="C")
    maskbytes = valid.astype(np.uint8).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(payload)
        fh.write(maskbytes)


def load_grid(path):
    """Read a grid file, returning (values float64 (W,H), valid bool (W,H), kind)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: corrupt grid header") from exc
        kind = header.get("kind")
        if kind not in GRID_KINDS:
            raise ValueError(f"{path}: unknown grid kind {kind!r}")
        w, h = int(header["w"]), int(header["h"])
        n = w * h
        payload = fh.read(4 * n)
        maskbytes = fh.read(n)
        if len(payload) != 4 * n or len(maskbytes) != n:
            raise ValueError(f"{path}: truncated grid payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(w, h).astype(np.float64)
    valid = np.frombuffer(maskbytes, dtype=np.uint8).reshape(w, h).astype(bool)
    return values, valid, kind


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path, obj):
    """Canonical JSON writer (sorted keys, newline-terminated) so hashes are stable."""
    with open(path, "w", encoding="ascii") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
