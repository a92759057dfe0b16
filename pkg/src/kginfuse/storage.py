"""Binary artifact formats and atomic file writes.

Two container formats, both with bit-exact round-trips:

* Array file ("KIGN"): magic, format version (u32), rank (u32), shape
  (u32 per axis), then the payload as little-endian float64, row-major.
* Checkpoint ("KICP"): magic, format version (u32), a JSON metadata block,
  a shape table of named arrays, then the concatenated float64 payloads.

All integers are little-endian unsigned 32-bit. Writes go through a
temp-file-then-rename so readers never observe a partial file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import StorageError

ARRAY_MAGIC = b"KIGN"
CHECKPOINT_MAGIC = b"KICP"
FORMAT_VERSION = 1


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write payload to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _pack_u32(*values: int) -> bytes:
    return struct.pack("<%dI" % len(values), *values)


def _array_bytes(arr: np.ndarray) -> bytes:
    data = np.asarray(arr, dtype=np.float64)
    header = ARRAY_MAGIC + _pack_u32(FORMAT_VERSION, data.ndim, *data.shape)
    return header + data.astype("<f8").tobytes()


def save_array(path, arr: np.ndarray) -> None:
    """Persist a float64 array in the KIGN format."""
    atomic_write_bytes(path, _array_bytes(arr))


def load_array(path) -> np.ndarray:
    """Read a KIGN array file back, bit-exactly."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != ARRAY_MAGIC:
        raise StorageError(f"{path}: not a KIGN array file")
    version, rank = struct.unpack_from("<2I", blob, 4)
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported format version {version}")
    shape = struct.unpack_from("<%dI" % rank, blob, 12)
    offset = 12 + 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return payload.reshape(shape).astype(np.float64)


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Persist named arrays plus a JSON metadata block.

    Array order is sorted by name and the JSON is canonicalized, so the
    file bytes are a pure function of the contents.
    """
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, _pack_u32(FORMAT_VERSION, len(meta_blob)), meta_blob]
    names = sorted(arrays)
    parts.append(_pack_u32(len(names)))
    payloads = []
    for name in names:
        data = np.asarray(arrays[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        parts.append(_pack_u32(len(encoded)))
        parts.append(encoded)
        parts.append(_pack_u32(data.ndim, *data.shape))
        payloads.append(data.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts + payloads))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a KICP checkpoint back as (meta, arrays)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise StorageError(f"{path}: not a KICP checkpoint")
    version, meta_len = struct.unpack_from("<2I", blob, 4)
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported format version {version}")
    offset = 12
    meta = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from("<%dI" % rank, blob, offset)
        offset += 4 * rank
        entries.append((name, shape))
    arrays = {}
    for name, shape in entries:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arrays[name] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset
        ).reshape(shape).astype(np.float64)
        offset += 8 * count
    return meta, arrays


def sha256_file(path) -> str:
    import hashlib

    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    import hashlib

    return hashlib.sha256(text.encode("utf-8")).hexdigest()
