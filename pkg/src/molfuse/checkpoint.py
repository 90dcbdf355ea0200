"""Checkpoint files: text header followed by flat little-endian float64 arrays.

Layout::

    molfuse-checkpoint 1
    dtype float64 little-endian
    param <name> <d0>x<d1>x...
    ...
    end
    <raw bytes, one flat array per param line, in header order>

Round-trips are bit-exact: saving and reloading reproduces every array and
re-saving reproduces the file bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .tensor import Tensor

MAGIC = "molfuse-checkpoint 1"
DTYPE_LINE = "dtype float64 little-endian"


def save_params(path: str | Path, params: dict[str, Tensor]) -> None:
    lines = [MAGIC, DTYPE_LINE]
    for name, p in params.items():
        if any(ch.isspace() for ch in name):
            raise DataError(f"parameter name {name!r} contains whitespace")
        dims = "x".join(str(d) for d in p.shape) if p.shape else "scalar"
        lines.append(f"param {name} {dims}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        for p in params.values():
            fh.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into plain arrays keyed by parameter name."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        head_end = blob.index(b"end\n") + len(b"end\n")
    except ValueError:
        raise DataError(f"{path}: missing checkpoint header terminator")
    header = blob[:head_end].decode("utf-8").splitlines()
    if not header or header[0] != MAGIC:
        raise DataError(f"{path}: not a molfuse checkpoint (bad magic)")
    if header[1] != DTYPE_LINE:
        raise DataError(f"{path}: unsupported dtype line {header[1]!r}")
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in header[2:-1]:
        kind, name, dims = line.split(" ")
        if kind != "param":
            raise DataError(f"{path}: unexpected header line {line!r}")
        shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
        shapes.append((name, shape))
    out: dict[str, np.ndarray] = {}
    offset = head_end
    for name, shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"{path}: truncated data for parameter {name!r}")
        out[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after last parameter")
    return out


def load_into(path: str | Path, params: dict[str, Tensor]) -> None:
    """Load a checkpoint into an existing parameter collection, checking shapes."""
    arrays = load_arrays(path)
    if set(arrays) != set(params):
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        raise DataError(f"{path}: parameter names differ (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, p in params.items():
        if arrays[name].shape != p.shape:
            raise DataError(f"{path}: shape mismatch for {name!r}: {arrays[name].shape} vs {p.shape}")
        p.values = arrays[name]
