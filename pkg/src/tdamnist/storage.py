"""JSON-header + little-endian float32 payload container.

Layout::

    b"TDAC"            4-byte magic
    uint32 LE          header length in bytes
    header             UTF-8 JSON, keys sorted
    payload            little-endian float32, C order, shape in header["shape"]

Used for diagram caches, feature matrices and model parameters.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TDAC"


class ContainerError(ValueError):
    pass


def encode(header: dict, payload: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(payload, dtype="<f4")
    header = dict(header, shape=list(payload.shape))
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(blob)) + blob + payload.tobytes()


def decode(raw: bytes) -> tuple[dict, np.ndarray]:
    if raw[:4] != MAGIC:
        raise ContainerError("not a feature container (bad magic)")
    if len(raw) < 8:
        raise ContainerError("truncated container header")
    (n,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt container header: {exc}") from exc
    shape = tuple(header["shape"])
    body = raw[8 + n :]
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(body) != expected:
        raise ContainerError(f"payload is {len(body)} bytes, header promises {expected}")
    return header, np.frombuffer(body, dtype="<f4").reshape(shape).copy()


def write(path, header: dict, payload: np.ndarray) -> None:
    """Atomic write (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(header, payload))
    os.replace(tmp, path)


def read(path) -> tuple[dict, np.ndarray]:
    return decode(Path(path).read_bytes())


def fingerprint(obj) -> str:
    """Content hash of a JSON-serializable object or raw bytes."""
    h = hashlib.sha256()
    if isinstance(obj, (bytes, bytearray, memoryview)):
        h.update(obj)
    else:
        h.update(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())
    return h.hexdigest()[:16]
