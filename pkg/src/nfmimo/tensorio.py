"""Bit-exact binary tensor container.

Layout: 8-byte magic "NFTENSR\\0", uint32-LE header length, UTF-8 JSON header
{"dtype", "shape", "order": "C", "byte_order": "LE", "meta": {...}}, then the
raw little-endian payload with the last dimension contiguous; complex values
are interleaved (real, imag). The header is serialized canonically (sorted
keys, no whitespace) so identical tensors produce identical files.

Writers create a temporary file in the target directory and atomically rename
it into place; concurrent readers never observe partial files.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"NFTENSR\x00"

_DTYPE_TO_NUMPY = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "c64": np.dtype("<c8"),
    "c128": np.dtype("<c16"),
}
_KIND_TO_DTYPE = {np.dtype(k): name for name, k in _DTYPE_TO_NUMPY.items()}


class TensorFormatError(ValueError):
    """Malformed container: bad magic, truncated payload, unknown dtype."""


def _dtype_name(arr: np.ndarray) -> str:
    key = arr.dtype.newbyteorder("<")
    name = _KIND_TO_DTYPE.get(key)
    if name is None:
        raise TensorFormatError(
            f"unsupported dtype {arr.dtype}; use one of {sorted(_DTYPE_TO_NUMPY)}"
        )
    return name


def write_tensor(path, values: np.ndarray, meta: dict | None = None) -> None:
    """Write a tensor container; read_tensor(path) recovers it bit-exactly."""
    values = np.asarray(values)
    name = _dtype_name(values)
    header = {
        "dtype": name,
        "shape": list(values.shape),
        "order": "C",
        "byte_order": "LE",
        "meta": meta if meta is not None else {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(values, dtype=_DTYPE_TO_NUMPY[name]).tobytes()

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header_bytes).to_bytes(4, "little"))
            fh.write(header_bytes)
            fh.write(payload)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600; honor the umask
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r} at byte offset 0")
        raw_len = fh.read(4)
        if len(raw_len) < 4:
            raise TensorFormatError(f"{path}: truncated header length at byte offset 8")
        header_len = int.from_bytes(raw_len, "little")
        header_bytes = fh.read(header_len)
        if len(header_bytes) < header_len:
            raise TensorFormatError(f"{path}: truncated header at byte offset 12")
        try:
            header = json.loads(header_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TensorFormatError(f"{path}: invalid header JSON at byte offset 12: {exc}") from exc
    return header


def read_tensor(path) -> tuple[np.ndarray, dict]:
    """Read a container; returns (values, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {blob[:8]!r} at byte offset 0")
    if len(blob) < 12:
        raise TensorFormatError(f"{path}: truncated header length at byte offset 8")
    header_len = int.from_bytes(blob[8:12], "little")
    header_end = 12 + header_len
    if len(blob) < header_end:
        raise TensorFormatError(f"{path}: truncated header at byte offset 12")
    try:
        header = json.loads(blob[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"{path}: invalid header JSON at byte offset 12: {exc}") from exc

    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPE_TO_NUMPY:
        raise TensorFormatError(f"{path}: unknown dtype {dtype_name!r} in header")
    if header.get("order", "C") != "C":
        raise TensorFormatError(f"{path}: unsupported order {header.get('order')!r}")
    if header.get("byte_order", "LE") != "LE":
        raise TensorFormatError(f"{path}: unsupported byte order {header.get('byte_order')!r}")
    shape = tuple(int(d) for d in header.get("shape", []))
    dtype = _DTYPE_TO_NUMPY[dtype_name]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    got = len(blob) - header_end
    if got != expected:
        raise TensorFormatError(
            f"{path}: payload is {got} bytes at offset {header_end}, expected {expected}"
        )
    values = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=header_end)
    return values.reshape(shape).copy(), header.get("meta", {})
