"""Record codec: escaping, round-trips, manifest parsing."""

import random

import pytest

from minimr.errors import InputError, RecordCodecError
from minimr.records import (
    Record,
    decode_record,
    encode_record,
    escape_field,
    read_manifest,
    read_records,
    unescape_field,
    write_record_file,
)

from conftest import make_manifest


def test_simple_pair_encodes_to_tab_line():
    assert encode_record(Record(b"a", b"b")) == b"a\tb"


def test_separators_inside_fields_are_escaped():
    r = Record(b"a\tb", b"c\nd\\e")
    line = encode_record(r)
    assert b"\n" not in line
    assert line.count(b"\t") == 1  # only the field separator survives
    assert decode_record(line) == r


def test_line_without_tab_decodes_as_key_only():
    assert decode_record(b"justakey") == Record(b"justakey", b"")


def test_malformed_escape_raises():
    with pytest.raises(RecordCodecError):
        unescape_field(b"bad\\x")
    with pytest.raises(RecordCodecError):
        decode_record(b"dangling\\")


def test_escape_unescape_inverse_on_seeded_pairs():
    rng = random.Random(42)
    for _ in range(10000):
        field = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 30)))
        assert unescape_field(escape_field(field)) == field


def test_roundtrip_10000_seeded_random_records():
    rng = random.Random(7)
    records = [
        Record(
            bytes(rng.randrange(256) for _ in range(rng.randrange(0, 20))),
            bytes(rng.randrange(256) for _ in range(rng.randrange(0, 20))),
        )
        for _ in range(10000)
    ]
    assert all(decode_record(encode_record(r)) == r for r in records)


def test_record_file_roundtrip(tmp_path):
    records = [Record(b"k\t1", b"v\n1"), Record(b"", b""), Record(b"x", b"y")]
    path = str(tmp_path / "records")
    assert write_record_file(path, records) == 3
    assert list(read_records(path)) == records


def test_manifest_skips_comments_and_splits_first_tab(tmp_path):
    path = make_manifest(
        tmp_path / "m", ["# header comment", "plain", "a\tb\tc", ""]
    )
    entries = read_manifest(path)
    assert entries == [Record(b"plain", b""), Record(b"a", b"b\tc"), Record(b"", b"")]


def test_missing_manifest_is_input_error(tmp_path):
    with pytest.raises(InputError):
        read_manifest(str(tmp_path / "absent"))
