"""Tensor container: human-readable header + raw little-endian payloads.

Used for model checkpoints and optimizer state (f32) and serialized batches
(i32). Round-trips are bit-exact.
"""

from __future__ import annotations

import numpy as np

MAGIC = "WASMREV-TENSORS v1"

_DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}
_DTYPE_NAMES = {np.dtype("<f4"): "f32", np.dtype("<i4"): "i32"}


def save_container(path: str, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    payloads = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        dtype = _DTYPE_NAMES.get(arr.dtype.newbyteorder("<"))
        if dtype is None:
            raise ValueError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        data = arr.astype(_DTYPES[dtype], copy=False).tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        entries.append(f"tensor {name} {dtype} [{shape}] {offset}")
        payloads.append(data)
        offset += len(data)

    lines = [MAGIC]
    for key, value in (meta or {}).items():
        value = str(value)
        if "\n" in value:
            raise ValueError("meta values must be single-line")
        lines.append(f"meta {key} {value}")
    lines.extend(entries)
    lines.append("end")
    header = "\n".join(lines) + "\n"

    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        for data in payloads:
            fh.write(data)


def load_container(path: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        blob = fh.read()

    cut = 0
    lines = []
    while True:
        nl = blob.index(b"\n", cut)
        line = blob[cut:nl].decode("utf-8")
        cut = nl + 1
        lines.append(line)
        if line == "end":
            break
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC} file")

    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    payload = blob[cut:]
    for line in lines[1:-1]:
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            key, value = rest.split(" ", 1)
            meta[key] = value
        elif kind == "tensor":
            name, dtype, shape_s, offset_s = rest.rsplit(" ", 3)
            shape = tuple(int(d) for d in shape_s.strip("[]").split(",") if d)
            np_dtype = _DTYPES[dtype]
            count = int(np.prod(shape)) if shape else 1
            start = int(offset_s)
            arr = np.frombuffer(payload, dtype=np_dtype, count=count, offset=start)
            tensors[name] = arr.reshape(shape).copy()
        else:
            raise ValueError(f"{path}: unknown header line {line!r}")
    return tensors, meta
