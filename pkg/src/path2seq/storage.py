"""Binary record files for checkpoints.

Layout (all integers little-endian):

    magic "P2SQ" | u32 version | u32 record count | records... | u32 crc32

Each record: u32 name length, UTF-8 name, u8 dtype tag, u8 rank,
u64 dims[rank], raw payload bytes. Tags: 0 = float64 tensor, 1 = float32
tensor, 2 = int64 tensor, 3 = UTF-8 blob (rank 1, dim = byte length).
The trailing crc32 covers every record byte; the loader checks magic,
version, checksum and that the file holds exactly the declared records.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import Path2SeqError

MAGIC = b"P2SQ"
VERSION = 1

TAG_F64, TAG_F32, TAG_I64, TAG_BYTES = 0, 1, 2, 3
_TAG_DTYPE = {TAG_F64: "<f8", TAG_F32: "<f4", TAG_I64: "<i8"}


class CheckpointError(Path2SeqError):
    kind = "io-error"


class CorruptFile(CheckpointError):
    kind = "corrupt-file"


class VersionMismatch(CheckpointError):
    kind = "version-mismatch"


def _encode_record(name: str, value) -> bytes:
    name_b = name.encode("utf-8")
    if isinstance(value, bytes):
        tag, dims, payload = TAG_BYTES, (len(value),), value
    else:
        arr = np.ascontiguousarray(value)
        if arr.dtype == np.float64:
            tag = TAG_F64
        elif arr.dtype == np.float32:
            tag = TAG_F32
        elif arr.dtype == np.int64:
            tag = TAG_I64
        else:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for record {name!r}")
        dims = arr.shape
        payload = arr.astype(_TAG_DTYPE[tag], copy=False).tobytes()
    head = struct.pack("<I", len(name_b)) + name_b + struct.pack("<BB", tag, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims)
    return head + payload


def write_records(path, records: list[tuple[str, object]]):
    """Write named records in order. Values: numpy arrays (f64/f32/i64) or
    raw bytes."""
    body = b"".join(_encode_record(name, value) for name, value in records)
    blob = MAGIC + struct.pack("<II", VERSION, len(records)) + body
    blob += struct.pack("<I", zlib.crc32(body))
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise CheckpointError(f"cannot write {path}: {exc}") from exc


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptFile(f"{self.path}: truncated record data")
        out = self.blob[self.pos: self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_records(path) -> list[tuple[str, object]]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CorruptFile(f"{path}: not a {MAGIC.decode()} file")
    reader = _Reader(blob, path)
    reader.pos = 4
    version = reader.u32()
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {VERSION}")
    count = reader.u32()
    body_start = reader.pos
    records = []
    for _ in range(count):
        name = reader.take(reader.u32()).decode("utf-8")
        tag, rank = struct.unpack("<BB", reader.take(2))
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank))
        if tag == TAG_BYTES:
            if rank != 1:
                raise CorruptFile(f"{path}: byte record {name!r} with rank {rank}")
            records.append((name, reader.take(dims[0])))
        elif tag in _TAG_DTYPE:
            size = int(np.prod(dims, dtype=np.int64)) if dims else 1
            itemsize = np.dtype(_TAG_DTYPE[tag]).itemsize
            arr = np.frombuffer(reader.take(size * itemsize), dtype=_TAG_DTYPE[tag])
            records.append((name, arr.reshape(dims).copy()))
        else:
            raise CorruptFile(f"{path}: unknown dtype tag {tag} in record {name!r}")
    body = blob[body_start: reader.pos]
    if reader.pos + 4 != len(blob):
        raise CorruptFile(f"{path}: {len(blob) - reader.pos - 4} trailing bytes")
    if struct.unpack("<I", blob[reader.pos:])[0] != zlib.crc32(body):
        raise CorruptFile(f"{path}: checksum mismatch")
    return records


def encode_string_list(items: list[str]) -> bytes:
    for s in items:
        if "\n" in s:
            raise CheckpointError("string list entries must not contain newlines")
    return "\n".join(items).encode("utf-8")


def decode_string_list(blob: bytes) -> list[str]:
    if blob == b"":
        return []
    return blob.decode("utf-8").split("\n")
