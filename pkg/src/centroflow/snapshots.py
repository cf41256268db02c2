"""Persistence: body snapshots, invariant time series, and run metadata.

Snapshots are schema-versioned JSON with full-precision floats (Python's
float repr round-trips exactly), so a saved body reloads bit-identically.
Time series are CSV files with the column order fixed by
:class:`~centroflow.invariants.InvariantRecord`.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .body import Body
from .invariants import InvariantRecord
from .sphere import build_grid

__all__ = [
    "save_body",
    "load_body",
    "write_series",
    "read_series",
    "write_json",
]

BODY_SCHEMA = "centroflow/body@1"


def save_body(body: Body, path, time: float | None = None) -> None:
    """Write a body snapshot (grid descriptor, node list, support values)."""
    doc = {
        "schema": BODY_SCHEMA,
        "n": body.n,
        "grid": body.grid.resolution_descriptor,
        "nodes": [list(z) for z in body.grid.nodes],
        "support": list(map(float, body.s)),
    }
    if time is not None:
        doc["time"] = float(time)
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_body(path) -> Body:
    """Reload a snapshot; reproduces the saved support values bit-exactly."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ValueError(
            f"malformed body snapshot {path}: line {err.lineno}, column "
            f"{err.colno}: {err.msg}"
        ) from None
    for key in ("schema", "n", "grid", "support"):
        if key not in doc:
            raise ValueError(f"malformed body snapshot {path}: missing field {key!r}")
    if doc["schema"] != BODY_SCHEMA:
        raise ValueError(
            f"unsupported snapshot schema {doc['schema']!r} (expected {BODY_SCHEMA})"
        )
    grid_desc = doc["grid"]
    if grid_desc.get("kind") == "circle":
        grid = build_grid(1, grid_desc["size"])
    elif grid_desc.get("kind") == "latlon":
        grid = build_grid(2, (grid_desc["nlat"], grid_desc["nlon"]))
    else:
        raise ValueError(
            f"malformed body snapshot {path}: unknown grid kind "
            f"{grid_desc.get('kind')!r}"
        )
    support = np.asarray(doc["support"], dtype=float)
    if support.shape != (grid.size,):
        raise ValueError(
            f"malformed body snapshot {path}: {support.size} support values "
            f"for a grid of {grid.size} nodes"
        )
    nodes = np.asarray(doc["nodes"], dtype=float)
    if nodes.shape != grid.nodes.shape or not np.allclose(
        nodes, grid.nodes, atol=1e-12, rtol=0.0
    ):
        raise ValueError(
            f"malformed body snapshot {path}: node list does not match the "
            f"declared grid"
        )
    # No symmetrization or band-limiting: reproduce the stored samples.
    return Body(grid, support, symmetrize=False, band_limit=False)


def write_series(records, path) -> None:
    """Write invariant records as CSV with the documented column order."""
    names = InvariantRecord.field_names()
    lines = [",".join(names)]
    for rec in records:
        lines.append(",".join(repr(v) for v in rec.as_row()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(path) -> list[InvariantRecord]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty series file {path}")
    names = lines[0].split(",")
    expected = list(InvariantRecord.field_names())
    if names != expected:
        raise ValueError(
            f"series file {path} has columns {names}, expected {expected}"
        )
    records = []
    for ln in lines[1:]:
        values = [float(v) for v in ln.split(",")]
        if len(values) != len(expected):
            raise ValueError(f"series file {path}: bad row {ln!r}")
        records.append(InvariantRecord(*values))
    return records


def write_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
