"""Word Count job: the engine's calibration workload.

Tokenization splits on ASCII whitespace with no case folding. Input records
come from line-oriented manifests, so a record's key is the text up to the
first tab and the value the rest; since the tab itself is whitespace,
tokenizing key and value separately yields exactly the tokens of the
original line.
"""

from __future__ import annotations

import heapq
import os
from operator import itemgetter
from typing import Iterable, Optional

from .core import JobResult, JobSpec, run_job
from .errors import InputError
from .records import Record, encode_record, read_records
from .streaming import StreamingTaskSpec


def tokenize(record: Record) -> list[bytes]:
    return record.key.split() + record.value.split()


def wordcount_mapper(record: Record, task_io) -> Iterable[Record]:
    for token in tokenize(record):
        yield Record(token, b"1")


def sum_reducer(key: bytes, values: list[bytes]) -> Iterable[Record]:
    yield Record(key, b"%d" % sum(int(v) for v in values))


def build_manifest(inputs: list[str], manifest_path: str) -> int:
    """Concatenate the lines of the given text files into a job manifest.

    Manifest semantics apply downstream: lines starting with ``#`` are
    treated as comments by the engine and are not counted.
    """
    count = 0
    with open(manifest_path, "wb") as out:
        for path in inputs:
            with open(path, "rb") as f:
                data = f.read()
            lines = data.splitlines()
            count += len(lines)
            if lines:
                out.write(b"\n".join(lines) + b"\n")
    return count


def collect_input_files(input_path: str) -> list[str]:
    if os.path.isfile(input_path):
        return [input_path]
    if os.path.isdir(input_path):
        files = [
            os.path.join(input_path, name)
            for name in sorted(os.listdir(input_path))
            if os.path.isfile(os.path.join(input_path, name))
        ]
        if not files:
            raise InputError("no input files in %s" % input_path)
        return files
    raise InputError("input not found: %s" % input_path)


def merge_counts(part_paths: list[str], out_path: str) -> int:
    """Merge sorted per-partition counts into one key-sorted counts file.

    Each word lives in exactly one partition, so a k-way merge by key yields
    the globally sorted output.
    """
    streams = [((r.key, r.value) for r in read_records(p)) for p in part_paths]
    merged = heapq.merge(*streams, key=itemgetter(0))
    count = 0
    with open(out_path, "wb") as f:
        for key, value in merged:
            f.write(encode_record(Record(key, value)) + b"\n")
            count += 1
    return count


def run_wordcount(
    input_path: str,
    output_path: str,
    workspace: str,
    map_slots: int = 1,
    num_reducers: int = 1,
    split_size: int = 2000,
    job_id: str = "wordcount",
    streaming_mapper: Optional[StreamingTaskSpec] = None,
    streaming_reducer: Optional[StreamingTaskSpec] = None,
) -> JobResult:
    """Count words in the input file or directory; writes `word \\t count`."""
    os.makedirs(workspace, exist_ok=True)
    manifest = os.path.join(workspace, "%s-input.manifest" % job_id)
    build_manifest(collect_input_files(input_path), manifest)
    spec = JobSpec(
        job_id=job_id,
        input_manifest=manifest,
        mapper=streaming_mapper or wordcount_mapper,
        reducer=streaming_reducer or sum_reducer,
        workspace=workspace,
        split_size=split_size,
        num_reducers=max(num_reducers, 1),
        map_slots=map_slots,
    )
    result = run_job(spec)
    merge_counts(result.output_paths, output_path)
    return result
