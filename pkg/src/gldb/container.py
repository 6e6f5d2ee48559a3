"""Binary tensor container shared by parameter and pipeline checkpoints.

Layout (little-endian)::

    b"GLDB" | u32 version | u32 header_len | header (UTF-8 JSON)
    u32 n_tensors
    per tensor: u16 name_len | name | u8 ndim | u64 dims[ndim] | float64 payload
    u32 CRC32 of everything above

The header is serialised with sorted keys so identical state gives identical
bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptChecksum, VersionUnsupported

MAGIC = b"GLDB"
VERSION = 1


def dumps_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode(header: dict, tensors: dict[str, np.ndarray]) -> bytes:
    hb = dumps_header(header)
    parts = [MAGIC, struct.pack("<II", VERSION, len(hb)), hb, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(blob) < 16:
        raise CorruptChecksum("checkpoint truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptChecksum("checkpoint CRC32 mismatch (truncated or corrupted file)")
    if body[:4] != MAGIC:
        raise CorruptChecksum("not a GLDB checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise VersionUnsupported(f"checkpoint version {version}, this build reads {VERSION}")
    off = 12
    header = json.loads(body[off : off + hlen].decode("utf-8"))
    off += hlen
    (n,) = struct.unpack_from("<I", body, off)
    off += 4
    tensors = {}
    for _ in range(n):
        (nl,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off : off + nl].decode("utf-8")
        off += nl
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", body, off)
        off += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
        tensors[name] = arr
    if off != len(body):
        raise CorruptChecksum("trailing bytes after tensor section")
    return header, tensors


def write(path, header: dict, tensors: dict[str, np.ndarray], sidecar: dict | None = None) -> bytes:
    blob = encode(header, tensors)
    Path(path).write_bytes(blob)
    if sidecar is not None:
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return blob


def read(path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())
