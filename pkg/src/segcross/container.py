"""Manifest + blob file container shared by checkpoints and retrieval indexes.

Layout::

    <manifest: UTF-8 JSON on one line> \\n
    <blob length: uint64 little-endian>
    <blob: little-endian float32 (or float64) values>

The manifest records the blob's CRC-32 and a format version.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


def pack_arrays(arrays, dtype: str = "<f4") -> bytes:
    if not arrays:
        return b""
    flat = np.concatenate([np.asarray(a, dtype=dtype).reshape(-1) for a in arrays])
    return flat.tobytes()


def unpack_arrays(blob: bytes, shapes, dtype: str = "<f4") -> list[np.ndarray]:
    if len(blob) % np.dtype(dtype).itemsize:
        raise TruncatedError("blob length is not a whole number of values")
    flat = np.frombuffer(blob, dtype=dtype).astype(np.float64)
    out, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape, dtype=np.int64))
        if offset + size > flat.size:
            raise TruncatedError("blob shorter than the declared arrays")
        out.append(flat[offset : offset + size].reshape(shape).copy())
        offset += size
    if offset != flat.size:
        raise ContainerError(f"blob holds {flat.size} values, manifest declares {offset}")
    return out


def write_container(path: str | Path, fmt: str, manifest: dict, blob: bytes) -> None:
    manifest = {"format": fmt, "version": FORMAT_VERSION, **manifest}
    manifest["blob_bytes"] = len(blob)
    manifest["crc32"] = zlib.crc32(blob) & 0xFFFFFFFF
    head = json.dumps(manifest, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(head + b"\n")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def read_container(path: str | Path, fmt: str) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    head, sep, rest = raw.partition(b"\n")
    if not sep:
        raise TruncatedError(f"{path}: missing manifest terminator")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable manifest ({exc})") from exc
    if manifest.get("format") != fmt:
        raise ContainerError(f"{path}: expected a {fmt} file, found {manifest.get('format')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {manifest.get('version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    if len(rest) < 8:
        raise TruncatedError(f"{path}: missing blob length")
    (length,) = struct.unpack("<Q", rest[:8])
    blob = rest[8:]
    if len(blob) != length or length != manifest.get("blob_bytes"):
        raise TruncatedError(f"{path}: blob has {len(blob)} bytes, expected {length}")
    if zlib.crc32(blob) & 0xFFFFFFFF != manifest.get("crc32"):
        raise ChecksumError(f"{path}: blob checksum does not match manifest")
    return manifest, blob
