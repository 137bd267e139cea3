"""Record type, line codec and manifest reading.

Wire format, shared by on-disk partition files and the streaming child
protocol: one record per line, ``key \\t value``, with backslash escapes for
tab (``\\t``), newline (``\\n``) and backslash (``\\\\``) inside fields.
Fields are raw byte strings; UTF-8 is never assumed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import InputError, RecordCodecError


@dataclass(frozen=True)
class Record:
    """An ordered (key, value) byte-string pair."""

    key: bytes
    value: bytes = b""


_UNESCAPE = {ord("t"): b"\t", ord("n"): b"\n", ord("\\"): b"\\"}


def escape_field(field: bytes) -> bytes:
    if b"\\" not in field and b"\t" not in field and b"\n" not in field:
        return field
    return (
        field.replace(b"\\", b"\\\\").replace(b"\t", b"\\t").replace(b"\n", b"\\n")
    )


def unescape_field(field: bytes) -> bytes:
    idx = field.find(b"\\")
    if idx < 0:
        return field
    out = bytearray()
    pos = 0
    n = len(field)
    while idx >= 0:
        out += field[pos:idx]
        if idx + 1 >= n:
            raise RecordCodecError("dangling backslash at end of field")
        try:
            out += _UNESCAPE[field[idx + 1]]
        except KeyError:
            raise RecordCodecError(
                "bad escape sequence %r" % field[idx : idx + 2]
            ) from None
        pos = idx + 2
        idx = field.find(b"\\", pos)
    out += field[pos:]
    return bytes(out)


def encode_record(record: Record) -> bytes:
    """Serialize one record as a line (without the trailing newline)."""
    return escape_field(record.key) + b"\t" + escape_field(record.value)


def decode_record(line: bytes) -> Record:
    """Parse one line (trailing newline allowed). No tab means an empty value."""
    line = line.rstrip(b"\n")
    sep = line.find(b"\t")
    if sep < 0:
        return Record(unescape_field(line), b"")
    return Record(unescape_field(line[:sep]), unescape_field(line[sep + 1 :]))


def write_records(f: IO[bytes], records: Iterable[Record]) -> int:
    """Write records to an open binary file; returns the record count."""
    count = 0
    chunk = []
    for record in records:
        chunk.append(encode_record(record))
        count += 1
        if len(chunk) >= 4096:
            f.write(b"\n".join(chunk) + b"\n")
            chunk = []
    if chunk:
        f.write(b"\n".join(chunk) + b"\n")
    return count


def write_record_file(path: str, records: Iterable[Record], fsync: bool = False) -> int:
    with open(path, "wb") as f:
        count = write_records(f, records)
        f.flush()
        if fsync:
            os.fsync(f.fileno())
    return count


def read_records(path: str) -> Iterator[Record]:
    """Iterate the records of an encoded record file."""
    with open(path, "rb") as f:
        data = f.read()
    if not data:
        return
    for line in data.split(b"\n"):
        if line:
            yield decode_record(line)


def read_manifest(path: str) -> list[Record]:
    """Read a job input manifest: one entry per line, ``#`` comments ignored.

    Manifest lines are raw text, not the escaped record encoding: the part
    before the first tab becomes the key, the rest the value, so a plain
    path line is ``(path, b"")`` and a grid line ``C \\t sigma`` splits
    naturally.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise InputError("cannot read manifest %s: %s" % (path, exc)) from exc
    entries = []
    for line in data.splitlines():
        if line.startswith(b"#"):
            continue
        sep = line.find(b"\t")
        if sep < 0:
            entries.append(Record(line, b""))
        else:
            entries.append(Record(line[:sep], line[sep + 1 :]))
    return entries
