"""Reader/writer for the shared binary tensor container.

Independent implementation of the exchange format produced by the imaging
toolkit (magic "NFTENSR\\0", uint32-LE header length, canonical JSON header,
raw little-endian payload, complex interleaved). Only the format is shared;
no code is.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"NFTENSR\x00"

_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "c64": np.dtype("<c8"),
    "c128": np.dtype("<c16"),
}
_NAMES = {v: k for k, v in _DTYPES.items()}


class ContainerError(ValueError):
    pass


def read_tensor(path) -> tuple[np.ndarray, dict]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    header_len = int.from_bytes(blob[8:12], "little")
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    dtype = _DTYPES.get(header.get("dtype"))
    if dtype is None:
        raise ContainerError(f"{path}: unknown dtype {header.get('dtype')!r}")
    shape = tuple(header["shape"])
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * dtype.itemsize
    payload = blob[12 + header_len :]
    if len(payload) != expected:
        raise ContainerError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=dtype, count=count).reshape(shape)
    return values.copy(), header.get("meta", {})


def write_tensor(path, values: np.ndarray, meta: dict | None = None) -> None:
    values = np.asarray(values)
    name = _NAMES.get(values.dtype.newbyteorder("<"))
    if name is None:
        raise ContainerError(f"unsupported dtype {values.dtype}")
    header = {
        "dtype": name,
        "shape": list(values.shape),
        "order": "C",
        "byte_order": "LE",
        "meta": meta if meta is not None else {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(blob).to_bytes(4, "little"))
            fh.write(blob)
            fh.write(np.ascontiguousarray(values).tobytes())
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600; honor the umask
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
