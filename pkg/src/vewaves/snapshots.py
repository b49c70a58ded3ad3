"""On-disk formats: snapshot binaries, norm-series CSV, JSON summaries.

Snapshot layout: an ASCII magic line, a JSON header line (grid metadata,
time, component list, dtype), then the raw C-order float64 payload of the
listed real-space components.  A JSON sidecar with the same header plus
free-form metadata is written next to the binary.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spectral import SpectralGrid, make_grid

MAGIC = b"VWSNAP1\n"

_COMPONENT_SHAPES = {"scalar": (), "vector": (3,), "tensor": (3, 3)}


def write_snapshot(path, grid: SpectralGrid, time: float, fields: dict, meta: dict | None = None) -> Path:
    """Write real-space fields to ``path`` (.bin) with a .json sidecar.

    ``fields`` maps names to physical arrays of scalar/vector/tensor shape.
    """
    path = Path(path)
    components = []
    payload = []
    for name, arr in fields.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        lead = arr.shape[: arr.ndim - 3]
        kind = {v: k for k, v in _COMPONENT_SHAPES.items()}.get(lead)
        if kind is None or arr.shape[-3:] != grid.phys_shape:
            raise ValueError(f"field {name!r} has unsupported shape {arr.shape}")
        components.append({"name": name, "kind": kind})
        payload.append(arr)
    header = {
        "n": grid.n,
        "length": grid.length,
        "dealias": grid.dealias,
        "time": float(time),
        "components": components,
        "dtype": "float64",
        "order": "C",
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write((json.dumps(header) + "\n").encode())
        for arr in payload:
            fh.write(arr.tobytes())
    sidecar = dict(header)
    sidecar["meta"] = meta or {}
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)
    return path


def read_snapshot(path):
    """Read a snapshot binary; returns (grid, time, fields dict)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a snapshot file")
        header = json.loads(fh.readline().decode())
        grid = make_grid(header["n"], header["length"], header.get("dealias", True))
        fields = {}
        count = header["n"] ** 3
        for comp in header["components"]:
            shape = _COMPONENT_SHAPES[comp["kind"]] + grid.phys_shape
            size = int(np.prod(shape, dtype=int))
            raw = np.frombuffer(fh.read(size * 8), dtype=np.float64, count=size)
            fields[comp["name"]] = raw.reshape(shape)
    return grid, header["time"], fields


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_norms_csv(path, times, norms: dict) -> Path:
    """Norm series as CSV rows (time, p, value), 17 significant digits."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("time,p,value\n")
        for p, series in norms.items():
            label = "inf" if np.isinf(float(p) if p != "inf" else np.inf) else f"{float(p):g}"
            for t, v in zip(times, series):
                fh.write(f"{format_float(float(t))},{label},{format_float(float(v))}\n")
    return path


def write_kernel_dump_csv(path, rows) -> Path:
    """Kernel factor dump: k, t and Re/Im of the six factors per row."""
    names = ["s_minus", "s_plus", "s_zero", "c_minus", "c_plus", "c_zero"]
    header = ["k", "t"] + [f"{n}_{part}" for n in names for part in ("re", "im")]
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [format_float(row["k"]), format_float(row["t"])]
            for n in names:
                cells.append(format_float(row[n]))
                cells.append(format_float(0.0))
            fh.write(",".join(cells) + "\n")
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def parse_config_text(text: str) -> dict:
    """Parse a UTF-8 config: JSON if it starts with '{', else key = value
    lines with optional [section] headers mapping to nested dicts."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out: dict = {}
    section = out
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            section = out.setdefault(name, {})
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        section[key.strip()] = _coerce(value.strip())
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf"):
        return float("inf")
    if "," in value:
        return [_coerce(v.strip()) for v in value.split(",") if v.strip()]
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value
