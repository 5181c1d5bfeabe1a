"""Hashing and length-prefixed binary framing shared by the ledger layers."""

from __future__ import annotations

import hashlib
import struct

ZERO_HASH = "0" * 64


def sha256_hex(*parts: bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(struct.pack(">I", len(part)))
        h.update(part)
    return h.hexdigest()


def pack_fields(*fields: bytes) -> bytes:
    return b"".join(struct.pack(">I", len(f)) + f for f in fields)


def unpack_fields(data: bytes, count: int | None = None) -> list[bytes]:
    out = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise ValueError("truncated length prefix")
        (size,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + size > len(data):
            raise ValueError("truncated field")
        out.append(data[pos:pos + size])
        pos += size
    if count is not None and len(out) != count:
        raise ValueError(f"expected {count} fields, got {len(out)}")
    return out
