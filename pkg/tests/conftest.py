"""Shared fixtures: manifests, external child scripts, tiny corpora."""

import os
import stat
import sys
import textwrap

import pytest

from minimr.records import Record


def make_manifest(path, lines):
    """Write raw manifest lines (bytes or str) and return the path."""
    with open(path, "wb") as f:
        for line in lines:
            if isinstance(line, str):
                line = line.encode()
            f.write(line + b"\n")
    return str(path)


def make_script(path, body):
    """Write an executable python child script and return its argv list."""
    with open(path, "w") as f:
        f.write("#!%s\n" % sys.executable)
        f.write(textwrap.dedent(body))
    os.chmod(path, os.stat(path).st_mode | stat.S_IXUSR)
    return [sys.executable, str(path)]


@pytest.fixture
def workspace(tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    return str(ws)


def identity_mapper(record, task_io):
    yield record


def double_mapper(record, task_io):
    yield Record(record.key, record.value)
    yield Record(record.key + b"!", record.value)


def identity_reducer(key, values):
    for v in values:
        yield Record(key, v)
