"""Field serialization: flat TCUR binary files, CSV export, current manifests.

Binary layout: magic ``TCUR``, then version, d, n, n_t as little-endian u32,
then float64 little-endian samples in t-major, x1-major order. Bare spatial
arrays are stored with n_t = 0 so they cannot be confused with one-slice
fields.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import PeriodicGrid, ScalarField, VectorField

MAGIC = b"TCUR"
VERSION = 1

_HEADER = struct.Struct("<4sIIII")


def write_field(path, f: ScalarField) -> None:
    _write_array(path, f.grid.d, f.grid.n, f.grid.n_t, f.values)


def write_spatial(path, grid_d: int, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    _write_array(path, grid_d, arr.shape[0], 0, arr)


def _write_array(path, d: int, n: int, n_t: int, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, n, n_t))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_header(fh) -> tuple[int, int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated TCUR header")
    magic, version, d, n, n_t = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported TCUR version {version}")
    return d, n, n_t


def read_field(path, grid: PeriodicGrid | None = None) -> ScalarField:
    with open(path, "rb") as fh:
        d, n, n_t = _read_header(fh)
        if n_t == 0:
            raise ValueError(f"{path} holds a spatial array, not a time-indexed field")
        data = np.frombuffer(fh.read(), dtype="<f8")
    g = grid if grid is not None else PeriodicGrid(d=d, n=n, n_t=n_t)
    if (g.d, g.n, g.n_t) != (d, n, n_t):
        raise ValueError(f"file grid ({d},{n},{n_t}) does not match expected ({g.d},{g.n},{g.n_t})")
    return ScalarField(g, data.reshape(g.shape))


def read_spatial(path) -> np.ndarray:
    with open(path, "rb") as fh:
        d, n, n_t = _read_header(fh)
        if n_t != 0:
            raise ValueError(f"{path} holds a time-indexed field, not a spatial array")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape((n,) * d).copy()


def export_field_csv(path, f: ScalarField) -> None:
    """Rows (t, x_1[, x_2], value) in t-major then x1-major order."""
    g = f.grid
    header = "t," + ",".join(f"x_{j + 1}" for j in range(g.d)) + ",value"
    nodes = g.nodes()
    times = g.times()
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for k in range(g.n_t):
            flat = f.values[k].ravel()
            tk = repr(float(times[k]))
            for row, v in zip(nodes, flat):
                coords = ",".join(repr(float(c)) for c in row)
                fh.write(f"{tk},{coords},{repr(float(v))}\n")


# ---------------------------------------------------------------------------
# current manifests (one JSON manifest plus one TCUR file per coefficient)
# ---------------------------------------------------------------------------


def write_current_manifest(directory, base: str, kind: str, fields: dict[str, ScalarField]) -> Path:
    """Store named coefficient fields plus a JSON manifest; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = next(iter(fields.values())).grid
    files = {}
    for name, field in fields.items():
        fname = f"{base}_{name}.tcur"
        write_field(directory / fname, field)
        files[name] = fname
    manifest = {
        "schema_version": 1,
        "kind": kind,
        "grid": {"d": grid.d, "n": grid.n, "n_t": grid.n_t},
        "files": files,
    }
    path = directory / f"{base}.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_current_manifest(manifest_path) -> tuple[str, PeriodicGrid, dict[str, ScalarField]]:
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != 1:
        raise ValueError("unsupported manifest schema_version")
    gspec = manifest["grid"]
    grid = PeriodicGrid(d=gspec["d"], n=gspec["n"], n_t=gspec["n_t"])
    fields = {
        name: read_field(manifest_path.parent / fname, grid)
        for name, fname in manifest["files"].items()
    }
    return manifest["kind"], grid, fields


def write_vector_channels(directory, base: str, v: VectorField) -> list[str]:
    names = []
    for j, comp in enumerate(v.components):
        fname = f"{base}_{j}.tcur"
        write_field(Path(directory) / fname, comp)
        names.append(fname)
    return names
