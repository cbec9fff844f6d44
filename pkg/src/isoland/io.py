"""Snapshots, CSV tables and run manifests.

A snapshot is a pair ``<stem>.json`` (header) + ``<stem>.bin`` (little-endian
float64 rows f, a, h).  The header stores the grid edges exactly, so a read
reproduces the grid bit for bit.  CSV numbers use 17 significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import RadialField, RadialGrid
from .potentials import PotentialPair

__all__ = [
    "SnapshotError",
    "write_snapshot",
    "read_snapshot",
    "read_snapshot_state",
    "read_trajectory",
    "write_csv",
    "read_csv",
    "write_monitors_csv",
    "sha256_file",
    "write_manifest",
]

FORMAT = "isoland-snapshot-1"
_DTYPE = "<f8"


class SnapshotError(ValueError):
    """Missing or malformed snapshot files."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_snapshot(stem, state) -> list:
    """Write ``stem.json`` and ``stem.bin`` for a solver state; returns both paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    grid = state.f.grid
    header = {
        "format": FORMAT,
        "t": float(state.t),
        "step_index": int(state.step_index),
        "d": int(grid.d),
        "n": int(grid.n),
        "r_max": float(grid.r_max),
        "stretch": grid.stretch if grid.stretch == "uniform" else float(grid.stretch),
        "edges": [float(e) for e in grid.edges],
        "rows": ["f", "a", "h"],
        "dtype": _DTYPE,
        "gamma": float(state.pair.gamma),
        "source_mass": float(state.pair.source_mass),
        "c_a": float(state.pair.c_a),
        "c_h": float(state.pair.c_h),
    }
    data = np.stack([state.f.values, state.pair.a.values, state.pair.h.values]).astype(_DTYPE)
    jpath, bpath = stem.with_suffix(".json"), stem.with_suffix(".bin")
    jpath.write_text(json.dumps(header, indent=1) + "\n")
    bpath.write_bytes(data.tobytes())
    return [jpath, bpath]


def _load(path):
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    jpath, bpath = p.with_suffix(".json"), p.with_suffix(".bin")
    try:
        header = json.loads(jpath.read_text())
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot header {jpath}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"malformed snapshot header {jpath}: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise SnapshotError(f"{jpath} is not an {FORMAT} header")
    try:
        n = int(header["n"])
        edges = np.asarray(header["edges"], dtype=float)
        d = int(header["d"])
        rows = len(header["rows"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"incomplete snapshot header {jpath}: {exc}") from None
    try:
        raw = bpath.read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot data {bpath}: {exc}") from None
    if len(edges) != n + 1 or len(raw) != 8 * rows * n:
        raise SnapshotError(f"snapshot {bpath} size does not match its header")
    data = np.frombuffer(raw, dtype=_DTYPE).reshape(rows, n).astype(float)
    if not np.all(np.isfinite(data)):
        raise SnapshotError(f"snapshot {bpath} contains non-finite values")
    return header, edges, d, data


def _grid_from(header, edges, d, cache=None):
    key = (d, edges.tobytes())
    if cache is not None and key in cache:
        return cache[key]
    stretch = header.get("stretch", "uniform")
    grid = RadialGrid(d=d, edges=edges, stretch=stretch)
    if cache is not None:
        cache[key] = grid
    return grid


def read_snapshot(path, grid_cache=None):
    """(header, density field) from a snapshot stem, .json or .bin path."""
    header, edges, d, data = _load(path)
    grid = _grid_from(header, edges, d, grid_cache)
    try:
        f = RadialField(grid, data[0])
    except ValueError as exc:
        raise SnapshotError(f"invalid density in snapshot {path}: {exc}") from None
    return header, f


def read_snapshot_state(path, grid_cache=None):
    """Rebuild a solver state (f, a, h, t) from a snapshot."""
    from .evolve import SolverState

    header, edges, d, data = _load(path)
    grid = _grid_from(header, edges, d, grid_cache)
    f = RadialField(grid, data[0])
    pair = PotentialPair(a=RadialField(grid, data[1]), h=RadialField(grid, data[2]),
                         gamma=float(header["gamma"]), source_mass=float(header["source_mass"]),
                         c_a=float(header["c_a"]), c_h=float(header["c_h"]))
    return SolverState(t=float(header["t"]), f=f, pair=pair,
                       step_index=int(header.get("step_index", 0)))


def read_trajectory(directory) -> list:
    """All snapshots of a simulate output directory, in time order, on one shared grid."""
    directory = Path(directory)
    snap_dir = directory / "snapshots" if (directory / "snapshots").is_dir() else directory
    heads = sorted(snap_dir.glob("snap_*.json"))
    if not heads:
        raise SnapshotError(f"no snapshots found under {directory}")
    cache = {}
    states = [read_snapshot_state(h, cache) for h in heads]
    states.sort(key=lambda s: s.t)
    return states


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """(columns, float array) of a numeric CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        cols = next(rd)
        rows = [[float(x) for x in r] for r in rd]
    return cols, np.array(rows).reshape(len(rows), len(cols))


def _p_label(p) -> str:
    return "%g" % float(p)


def write_monitors_csv(path, monitors, p_list) -> Path:
    cols = (["t", "mass", "m1", "m2", "m2_rhs"] + [f"lp_{_p_label(p)}" for p in p_list]
            + ["sup_f", "ell", "a_min_ratio"])
    rows = ([m.t, m.mass, m.m1, m.m2, m.m2_rhs] + [m.lp[float(p)] for p in p_list]
            + [m.sup_f, m.ell, m.a_min_ratio] for m in monitors)
    return write_csv(path, cols, rows)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, payload: dict, files) -> Path:
    """manifest.json with the payload plus a checksummed inventory of ``files``."""
    directory = Path(directory)
    inventory = []
    for f in sorted({Path(x) for x in files}):
        inventory.append({"path": str(f.relative_to(directory)) if f.is_relative_to(directory)
                          else str(f), "bytes": f.stat().st_size, "sha256": sha256_file(f)})
    out = dict(payload)
    out["files"] = inventory
    path = directory / "manifest.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
