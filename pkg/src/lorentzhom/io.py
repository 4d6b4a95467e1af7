"""Raw little-endian float64 arrays with JSON sidecars, and CSV tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

ORDER = "x-major, z fastest"


def write_raw(path, array, **meta):
    """Write ``array`` to ``path`` (.raw) and its sidecar ``path`` with .json."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(array, dtype="<f8")
    path.write_bytes(a.tobytes())
    sidecar = {"shape": list(a.shape), "dtype": "<f8", "order": ORDER}
    sidecar.update(meta)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return path


def read_raw(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    a = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["shape"])
    return a.copy(), meta


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def write_csv(path, columns: dict):
    """Columns of equal length, written with full float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [np.asarray(columns[k]).ravel() for k in names]
    length = {len(d) for d in data}
    if len(length) > 1:
        raise ValueError(f"columns have different lengths {sorted(length)}")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    return {k: np.array([float(r[i]) for r in body]) for i, k in enumerate(names)}
