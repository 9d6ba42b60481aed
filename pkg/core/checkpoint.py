"""
Self-describing binary checkpoint container

Layout (little-endian):
    magic "MBMG" | u32 version | u32 metadata length | metadata JSON
    per tensor: u32 name length | name | u32 dtype code | u32 rank | u32 dims[rank] | data
    8-byte BLAKE2b digest of everything before it

Version 2 added the per-tensor dtype code so training state can keep 64-bit
reals. Version 1 files (no dtype code, every tensor 32-bit) are still read;
only version 2 is written.
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from core.errors import CheckpointError, ChecksumError

MAGIC = b"MBMG"
FORMAT_VERSION = 2
READABLE_VERSIONS = (1, 2)
DIGEST_SIZE = 8
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    """Metadata plus an ordered table of named tensors"""

    metadata: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> Dict[str, np.ndarray]:
        """Tensors under `prefix/`, with the prefix stripped"""
        marker = f"{prefix}/"
        return {name[len(marker) :]: value for name, value in self.tensors.items() if name.startswith(marker)}


def digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=DIGEST_SIZE).digest()


def encode(checkpoint: Checkpoint) -> bytes:
    meta = json.dumps(checkpoint.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(meta)), meta]
    for name, value in checkpoint.tensors.items():
        array = np.asarray(value)
        code = CODE_FOR_DTYPE.get(array.dtype)
        if code is None:
            raise CheckpointError(f"tensor '{name}' has unsupported dtype {array.dtype}")
        encoded_name = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_U32.pack(code))
        parts.append(_U32.pack(array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    body = b"".join(parts)
    return body + digest(body)


def decode(blob: bytes) -> Checkpoint:
    minimum = len(MAGIC) + 2 * _U32.size + DIGEST_SIZE
    if len(blob) < minimum:
        raise CheckpointError(f"checkpoint truncated: {len(blob)} bytes, need at least {minimum}")
    body, stored = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if digest(body) != stored:
        raise ChecksumError("checkpoint digest mismatch (file corrupted or truncated)")
    if body[:4] != MAGIC:
        raise CheckpointError(f"bad magic {body[:4]!r}, expected {MAGIC!r}")

    (version,) = _U32.unpack_from(body, 4)
    if version not in READABLE_VERSIONS:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads {READABLE_VERSIONS})")

    reader = _Reader(body, 8)
    meta_len = reader.u32()
    try:
        metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint metadata is not valid JSON: {e}")

    tensors = {}
    while reader.offset < len(body):
        name = reader.take(reader.u32()).decode("utf-8")
        code = reader.u32() if version > 1 else 0
        if code not in DTYPE_CODES:
            raise CheckpointError(f"tensor '{name}' has unknown dtype code {code}")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        dtype = DTYPE_CODES[code]
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(reader.take(count * dtype.itemsize), dtype=dtype)
        tensors[name] = data.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
    return Checkpoint(metadata=metadata, tensors=tensors)


class _Reader:
    def __init__(self, body: bytes, offset: int):
        self.body = body
        self.offset = offset

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.body):
            raise CheckpointError(f"checkpoint truncated at byte {self.offset} (need {size} more bytes)")
        chunk = self.body[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]


def write_checkpoint(path: Union[str, Path], checkpoint: Checkpoint):
    """Atomically write `checkpoint` to `path` (temp file in the same directory, then rename)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode(checkpoint)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logging.info(f"Checkpoint written to {path} ({len(checkpoint.tensors)} tensors, {len(blob)} bytes)")


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    return decode(blob)
