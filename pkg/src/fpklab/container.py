"""Artifact persistence: chunked binary container, JSON reports, CSV.

The binary container holds large float arrays (flows, ensembles) as raw
little-endian float64 chunks after a JSON header:

    magic b"FPKL1\\n" | uint64 header length | header JSON | chunk bytes

JSON reports are written with sorted keys and repr-exact floats, so a
rerun with identical inputs produces byte-identical files; anything
time- or host-dependent goes to a separate metadata sidecar that
comparisons exclude.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .martingale import MartingaleStat, PathEnsemble
from .measures import EmpiricalMeasure, GridDensity, MarginalFlow

__all__ = [
    "save_ensemble",
    "load_ensemble",
    "save_flow",
    "load_flow",
    "jsonable",
    "write_json_report",
    "write_martingale_csv",
    "write_table_csv",
    "write_meta_sidecar",
]

_MAGIC = b"FPKL1\n"


def _write_container(path, header: dict, chunks: Sequence[tuple]):
    header = dict(header)
    header["chunks"] = [
        {"name": name, "shape": list(arr.shape)}
        for name, arr in chunks
    ]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in chunks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_container(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ConfigError(f"{path} is not a container file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        chunks = {}
        for spec in header["chunks"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8")
            chunks[spec["name"]] = data.reshape(shape).astype(float)
    return header, chunks


def save_ensemble(path, ens: PathEnsemble):
    header = {
        "kind": "ensemble",
        "n": int(ens.dim),
        "seed": int(ens.seed),
        "model_id": ens.model_id,
    }
    _write_container(path, header, [("times", ens.times), ("paths", ens.paths)])


def load_ensemble(path) -> PathEnsemble:
    header, chunks = _read_container(path)
    if header.get("kind") != "ensemble":
        raise ConfigError(f"{path} holds {header.get('kind')!r}, not an ensemble")
    return PathEnsemble(
        times=chunks["times"],
        paths=chunks["paths"],
        seed=int(header["seed"]),
        model_id=header.get("model_id", ""),
    )


def save_flow(path, flow: MarginalFlow):
    if flow.kind == "grid":
        first = flow.measures[0]
        axes = list(first.axes)
        dens = np.stack([m.density for m in flow.measures])
        chunks = [("times", flow.times)]
        for i, ax in enumerate(axes):
            chunks.append((f"axis{i}", ax))
        chunks.append(("densities", dens))
        header = {"kind": "flow-grid", "n": int(flow.dim),
                  "n_axes": len(axes)}
        _write_container(path, header, chunks)
        return
    pts = np.stack([m.points for m in flow.measures])
    wts = np.stack([m.weights for m in flow.measures])
    header = {"kind": "flow-empirical", "n": int(flow.dim)}
    _write_container(
        path, header,
        [("times", flow.times), ("points", pts), ("weights", wts)],
    )


def load_flow(path) -> MarginalFlow:
    header, chunks = _read_container(path)
    kind = header.get("kind")
    times = chunks["times"]
    if kind == "flow-grid":
        axes = [chunks[f"axis{i}"] for i in range(int(header["n_axes"]))]
        measures = [
            GridDensity(axes, d, validate=False) for d in chunks["densities"]
        ]
        return MarginalFlow(times, measures, kind="grid",
                            dim=int(header["n"]))
    if kind == "flow-empirical":
        pts, wts = chunks["points"], chunks["weights"]
        measures = [
            EmpiricalMeasure(p, w, validate=False)
            for p, w in zip(pts, wts)
        ]
        return MarginalFlow(times, measures, kind="empirical",
                            dim=int(header["n"]))
    raise ConfigError(f"{path} holds {kind!r}, not a flow")


def jsonable(obj):
    """Recursively convert reports to plain JSON-encodable values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        to_dict = getattr(obj, "to_dict", None)
        if callable(to_dict):
            return jsonable(to_dict())
        return jsonable(dataclasses.asdict(obj))
    return obj


def write_json_report(path, report: dict):
    """Deterministic JSON: sorted keys, repr floats, trailing newline."""
    text = json.dumps(jsonable(report), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_martingale_csv(path, stats: Sequence[MartingaleStat]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["f", "s", "t", "g", "stat", "se", "z"])
        for st in stats:
            writer.writerow([
                st.f_name, repr(st.s), repr(st.t), st.g_name,
                repr(st.stat), repr(st.se), repr(st.z),
            ])


def write_table_csv(path, rows: Sequence[dict], columns: Sequence[str]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(columns))
        for row in rows:
            out = []
            for c in columns:
                v = row[c]
                out.append(repr(float(v)) if isinstance(v, float) else v)
            writer.writerow(out)


def write_meta_sidecar(path, extra: dict = None):
    """Timestamps and other run-specific metadata, kept out of reports."""
    meta = {"created_utc": datetime.datetime.now(
        datetime.timezone.utc).isoformat()}
    if extra:
        meta.update(extra)
    Path(path).write_text(
        json.dumps(jsonable(meta), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
