"""Human-readable key/value header block used by the binary file formats.

Layout: an ASCII block of "key value" lines opened by "<format> <version>"
and closed by a lone "end" line, followed immediately by the binary payload.
Values never contain newlines; keys never contain spaces.
"""

from __future__ import annotations

import hashlib
from typing import BinaryIO


class FormatError(Exception):
    """Raised when a file does not parse as the expected format/version."""


def write_block(fh: BinaryIO, fmt: str, version: int, fields: dict) -> None:
    lines = [f"{fmt} {version}"]
    for key, value in fields.items():
        key = str(key)
        if " " in key or "\n" in key:
            raise ValueError(f"bad header key {key!r}")
        value = str(value)
        if "\n" in value:
            raise ValueError(f"bad header value for {key!r}")
        lines.append(f"{key} {value}")
    lines.append("end")
    fh.write(("\n".join(lines) + "\n").encode("ascii"))


def read_block(fh: BinaryIO, fmt: str, version: int) -> dict:
    """Parse the header block, leaving the stream at the payload start."""
    first = _read_line(fh)
    parts = first.split(" ")
    if len(parts) != 2 or parts[0] != fmt:
        raise FormatError(f"not a {fmt} file (got {first!r})")
    if parts[1] != str(version):
        raise FormatError(f"unsupported {fmt} version {parts[1]} (want {version})")
    fields = {}
    while True:
        line = _read_line(fh)
        if line == "end":
            return fields
        key, _, value = line.partition(" ")
        fields[key] = value


def _read_line(fh: BinaryIO, limit: int = 4096) -> str:
    buf = bytearray()
    while True:
        ch = fh.read(1)
        if not ch:
            raise FormatError("truncated header")
        if ch == b"\n":
            break
        buf += ch
        if len(buf) > limit:
            raise FormatError("header line too long")
    try:
        return buf.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII") from exc


def sha256_hex(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()
