"""Map/reduce data contracts, split planning, partitioned shuffle, job runner.

Intermediate records are always externalized to key-sorted on-disk partition
files, even for small jobs, so the IO behavior of component-style pipelines
stays observable. Every task writes under a private scratch directory that is
renamed into place on success (commit-by-rename); success is only reported
after the files are flushed to disk.

Workspace layout for a job::

    <workspace>/<job_id>/splits/split-<i>
    <workspace>/<job_id>/map-<i>/part-<r>
    <workspace>/<job_id>/reduce-<r>/out
    <workspace>/<job_id>/_final/part-<r>
    <workspace>/<job_id>/events.log
    <workspace>/<job_id>/rejects.txt        (only when a task rejected input)
"""

from __future__ import annotations

import heapq
import os
import shutil
import time
from dataclasses import dataclass, field
from itertools import groupby
from operator import itemgetter
from typing import Callable, Iterable, Iterator, Optional, Union

from .errors import InputError, IntegrityError, JobFailedError, TaskKilledError
from .records import Record, read_manifest, read_records, write_record_file
from .scheduler import Scheduler, TaskDescriptor, TaskState, TerminationPolicy, TrackerNode
from .streaming import StreamingTaskSpec, spawn_streaming_task

Mapper = Callable[[Record, "TaskIO"], Iterable[Record]]
Reducer = Callable[[bytes, list[bytes]], Iterable[Record]]
UserFunc = Union[Mapper, Reducer, StreamingTaskSpec]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; fixed so all execution paths agree byte-for-byte."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def partition(key: bytes, num_reducers: int) -> int:
    """Deterministic partition index in [0, num_reducers) for a key."""
    if num_reducers < 1:
        raise ValueError("num_reducers must be >= 1")
    if num_reducers == 1:
        return 0
    return fnv1a64(key) % num_reducers


@dataclass(frozen=True)
class InputSplit:
    split_id: int
    source: str  # manifest or materialized split file
    start: int  # first record index, inclusive
    end: int  # last record index, exclusive
    inline_records: Optional[tuple[Record, ...]] = None


@dataclass(frozen=True)
class PartitionFile:
    map_task_id: int
    partition_index: int
    path: str
    record_count: int


@dataclass
class JobSpec:
    job_id: str
    input_manifest: str
    mapper: UserFunc
    workspace: str
    reducer: Optional[UserFunc] = None
    split_size: int = 50
    num_reducers: int = 1
    map_slots: int = 1
    kill_policy: Optional[TerminationPolicy] = None
    nodes: Optional[list[TrackerNode]] = None
    max_attempts: int = 3


@dataclass
class JobResult:
    job_id: str
    output_paths: list[str]
    task_states: dict[str, TaskState]
    wall_time: float
    job_dir: str
    event_log: str
    rejects_path: Optional[str] = None
    killed_tasks: list[str] = field(default_factory=list)


class TaskIO:
    """Per-task context handed to mappers: progress reports and rejects."""

    def __init__(self, ctx=None, reject_path: Optional[str] = None):
        self._ctx = ctx
        self._reject_path = reject_path
        self._reject_file = None

    @property
    def task_id(self) -> str:
        return self._ctx.task_id if self._ctx is not None else "local"

    @property
    def attempt(self) -> int:
        return self._ctx.attempt if self._ctx is not None else 0

    def report(self, progress_unit: int, elapsed: float) -> bool:
        """Forward a checkpoint to the scheduler; True means stop now."""
        if self._ctx is None:
            return False
        return self._ctx.report(progress_unit, elapsed)

    def should_stop(self) -> bool:
        return self._ctx is not None and self._ctx.should_stop()

    @property
    def stop_event(self):
        return self._ctx.stop_event if self._ctx is not None else None

    @property
    def kill_requested(self) -> bool:
        return self._ctx is not None and self._ctx.kill_requested

    def reject(self, line: bytes) -> None:
        """Log one skipped input; the job collects these into rejects.txt."""
        if self._reject_file is None:
            if self._reject_path is None:
                raise RuntimeError("no reject sink configured for this task")
            self._reject_file = open(self._reject_path, "ab")
        self._reject_file.write(line.rstrip(b"\n") + b"\n")

    def close(self) -> None:
        if self._reject_file is not None:
            self._reject_file.close()
            self._reject_file = None


def plan_splits(input_manifest: str, split_size: int) -> list[InputSplit]:
    """Plan ceil(n / split_size) splits over the manifest's records.

    Every split except possibly the last holds exactly ``split_size`` records
    and record order is preserved. An empty manifest plans zero splits.
    """
    if split_size < 1:
        raise ValueError("split_size must be >= 1")
    if not os.path.exists(input_manifest):
        raise InputError("input manifest not found: %s" % input_manifest)
    n = len(read_manifest(input_manifest))
    splits = []
    for i, start in enumerate(range(0, n, split_size)):
        splits.append(
            InputSplit(split_id=i, source=input_manifest, start=start, end=min(start + split_size, n))
        )
    return splits


def load_split_records(split: InputSplit) -> list[Record]:
    if split.inline_records is not None:
        return list(split.inline_records)
    if split.source.endswith(".split"):
        return list(read_records(split.source))
    return read_manifest(split.source)[split.start : split.end]


def run_map_task(
    split: InputSplit,
    mapper: UserFunc,
    num_reducers: int,
    out_dir: str,
    task_io: Optional[TaskIO] = None,
    sort_output: bool = True,
) -> list[PartitionFile]:
    """Run one map task, writing max(R,1) key-sorted partition files.

    The mapper maps one input record to zero or more intermediate records;
    each lands in partition(key, R). Output files are durable (flushed and
    fsynced) before this returns, so a caller may report success. For R=0
    jobs the single partition keeps emission order (sort_output=False).
    """
    if task_io is None:
        task_io = TaskIO()
    r_eff = max(num_reducers, 1)
    buckets: list[list[tuple[bytes, bytes]]] = [[] for _ in range(r_eff)]
    for record in load_split_records(split):
        for out in mapper(record, task_io):
            buckets[partition(out.key, r_eff)].append((out.key, out.value))
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for r, bucket in enumerate(buckets):
        if sort_output:
            bucket.sort(key=itemgetter(0))
        path = os.path.join(out_dir, "part-%d" % r)
        count = write_record_file(path, (Record(k, v) for k, v in bucket), fsync=True)
        files.append(
            PartitionFile(map_task_id=split.split_id, partition_index=r, path=path, record_count=count)
        )
    return files


def run_streaming_map_task(
    split: InputSplit,
    spec: StreamingTaskSpec,
    num_reducers: int,
    out_dir: str,
    task_io: Optional[TaskIO] = None,
    sort_output: bool = True,
) -> list[PartitionFile]:
    """Map task variant that pipes the split through an external executable."""
    if task_io is None:
        task_io = TaskIO()
    outputs = spawn_streaming_task(
        spec,
        load_split_records(split),
        task_id=task_io.task_id,
        num_partitions=num_reducers,
        stop_event=task_io.stop_event,
    )
    r_eff = max(num_reducers, 1)
    buckets: list[list[tuple[bytes, bytes]]] = [[] for _ in range(r_eff)]
    for out in outputs:
        buckets[partition(out.key, r_eff)].append((out.key, out.value))
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for r, bucket in enumerate(buckets):
        if sort_output:
            bucket.sort(key=itemgetter(0))
        path = os.path.join(out_dir, "part-%d" % r)
        count = write_record_file(path, (Record(k, v) for k, v in bucket), fsync=True)
        files.append(
            PartitionFile(map_task_id=split.split_id, partition_index=r, path=path, record_count=count)
        )
    return files


def _checked_sorted(path: str) -> Iterator[tuple[bytes, bytes]]:
    prev = None
    for record in read_records(path):
        if prev is not None and record.key < prev:
            raise IntegrityError("partition file %s is not key-sorted" % path)
        prev = record.key
        yield record.key, record.value


def shuffle_group(files: list[PartitionFile]) -> Iterator[tuple[bytes, list[bytes]]]:
    """k-way merge of one partition's files into (key, values) groups.

    Keys come out strictly ascending; within a key, values keep the stable
    (map_task_id, in-file emission) order. Unsorted input is an engine bug
    and raises IntegrityError.
    """
    ordered = sorted(files, key=lambda f: f.map_task_id)
    streams = [_checked_sorted(f.path) for f in ordered]
    merged = heapq.merge(*streams, key=itemgetter(0))
    for key, pairs in groupby(merged, key=itemgetter(0)):
        yield key, [v for _, v in pairs]


def run_reduce_task(
    groups: Iterable[tuple[bytes, list[bytes]]],
    reducer: Reducer,
    out_path: str,
) -> int:
    """Invoke the reducer once per key in ascending key order; write records.

    Built-in reducers emit zero or one record per invocation; list-valued
    reducers are allowed but must say so in their docstring.
    """
    def produce():
        for key, values in groups:
            yield from reducer(key, values)

    return write_record_file(out_path, produce(), fsync=True)


def run_streaming_reduce_task(
    groups: Iterable[tuple[bytes, list[bytes]]],
    spec: StreamingTaskSpec,
    out_path: str,
    task_io: Optional[TaskIO] = None,
) -> int:
    """Reduce task variant piping grouped records through an executable.

    The child sees repeated ``key \\t value`` lines with identical adjacent
    keys and detects group boundaries by key change (streaming convention).
    """
    def flatten():
        for key, values in groups:
            for v in values:
                yield Record(key, v)

    outputs = spawn_streaming_task(
        spec,
        flatten(),
        task_id=task_io.task_id if task_io else "local",
        stop_event=task_io.stop_event if task_io else None,
    )
    return write_record_file(out_path, outputs, fsync=True)


def _commit_dir(tmp_dir: str, final_dir: str) -> None:
    if os.path.exists(final_dir):
        shutil.rmtree(final_dir)
    os.replace(tmp_dir, final_dir)


def run_job(spec: JobSpec) -> JobResult:
    """Run a whole job: plan splits, map, shuffle, reduce, finalize.

    With deterministic user functions the final output is byte-identical
    regardless of map_slots and task interleaving. With num_reducers == 0
    the (unsorted) map output is renamed as the final output. Any task
    exhausting its retries raises JobFailedError; partial diagnostics stay
    under the job directory.
    """
    t0 = time.monotonic()
    if isinstance(spec.mapper, StreamingTaskSpec):
        spec.mapper.validate()
    if isinstance(spec.reducer, StreamingTaskSpec):
        spec.reducer.validate()
    job_dir = os.path.join(spec.workspace, spec.job_id)
    splits_dir = os.path.join(job_dir, "splits")
    tmp_root = os.path.join(job_dir, "_tmp")
    final_dir = os.path.join(job_dir, "_final")
    for d in (splits_dir, tmp_root, final_dir):
        os.makedirs(d, exist_ok=True)
    event_log = os.path.join(job_dir, "events.log")

    # Materialize splits so each task reads only its own slice.
    planned = plan_splits(spec.input_manifest, spec.split_size)
    all_records = read_manifest(spec.input_manifest)
    splits = []
    for s in planned:
        path = os.path.join(splits_dir, "split-%05d.split" % s.split_id)
        write_record_file(path, all_records[s.start : s.end])
        splits.append(InputSplit(s.split_id, path, 0, s.end - s.start))

    nodes = spec.nodes or [TrackerNode("node-0", spec.map_slots)]
    sched = Scheduler(nodes, event_log, policy=spec.kill_policy, max_attempts=spec.max_attempts)
    r = spec.num_reducers
    sort_map = r > 0
    partition_files: dict[str, list[PartitionFile]] = {}
    streaming_map = isinstance(spec.mapper, StreamingTaskSpec)

    def execute_map(desc: TaskDescriptor, ctx) -> None:
        split: InputSplit = desc.payload
        tmp = os.path.join(tmp_root, "%s-attempt%d" % (desc.task_id, desc.attempt))
        if os.path.exists(tmp):
            shutil.rmtree(tmp)
        os.makedirs(tmp)
        task_io = TaskIO(ctx, reject_path=os.path.join(tmp, "rejects"))
        try:
            if streaming_map:
                files = run_streaming_map_task(split, spec.mapper, r, tmp, task_io, sort_map)
            else:
                files = run_map_task(split, spec.mapper, r, tmp, task_io, sort_map)
        finally:
            task_io.close()
        _commit_dir(tmp, os.path.join(job_dir, "map-%d" % split.split_id))
        committed = [
            PartitionFile(f.map_task_id, f.partition_index,
                          os.path.join(job_dir, "map-%d" % split.split_id, os.path.basename(f.path)),
                          f.record_count)
            for f in files
        ]
        partition_files[desc.task_id] = committed
        if task_io.kill_requested:
            raise TaskKilledError("task %s killed by policy" % desc.task_id)

    map_tasks = [
        TaskDescriptor(task_id="map-%05d" % s.split_id, kind="map", payload=s,
                       max_attempts=spec.max_attempts)
        for s in splits
    ]
    try:
        states = sched.run(map_tasks, execute_map)
        if sched.aborted:
            raise JobFailedError(
                "map phase aborted; diagnostics in %s" % job_dir,
                result=_result(spec, [], states, t0, job_dir, event_log),
            )

        map_outputs: list[PartitionFile] = []
        for task_id in sorted(partition_files):
            map_outputs.extend(partition_files[task_id])

        if r == 0:
            outputs = []
            for f in sorted(map_outputs, key=lambda f: f.map_task_id):
                dest = os.path.join(final_dir, "part-%d" % f.map_task_id)
                os.replace(f.path, dest)
                outputs.append(dest)
            result = _result(spec, outputs, states, t0, job_dir, event_log)
            _collect_rejects(job_dir, result)
            return result

        def execute_reduce(desc: TaskDescriptor, ctx) -> None:
            rix = desc.payload
            files = [f for f in map_outputs if f.partition_index == rix]
            tmp = os.path.join(tmp_root, "%s-attempt%d" % (desc.task_id, desc.attempt))
            if os.path.exists(tmp):
                shutil.rmtree(tmp)
            os.makedirs(tmp)
            task_io = TaskIO(ctx)
            groups = shuffle_group(files)
            out = os.path.join(tmp, "out")
            if isinstance(spec.reducer, StreamingTaskSpec):
                run_streaming_reduce_task(groups, spec.reducer, out, task_io)
            elif spec.reducer is None:
                write_record_file(out, (Record(k, v) for k, vs in groups for v in vs), fsync=True)
            else:
                run_reduce_task(groups, spec.reducer, out)
            _commit_dir(tmp, os.path.join(job_dir, "reduce-%d" % rix))

        reduce_tasks = [
            TaskDescriptor(task_id="reduce-%05d" % rix, kind="reduce", payload=rix,
                           max_attempts=spec.max_attempts)
            for rix in range(r)
        ]
        red_states = sched.run(reduce_tasks, execute_reduce)
        states.update(red_states)
        if sched.aborted:
            raise JobFailedError(
                "reduce phase aborted; diagnostics in %s" % job_dir,
                result=_result(spec, [], states, t0, job_dir, event_log),
            )

        outputs = []
        for rix in range(r):
            dest = os.path.join(final_dir, "part-%d" % rix)
            os.replace(os.path.join(job_dir, "reduce-%d" % rix, "out"), dest)
            outputs.append(dest)
        result = _result(spec, outputs, states, t0, job_dir, event_log)
        _collect_rejects(job_dir, result)
        return result
    finally:
        sched.close()


def _result(spec, outputs, states, t0, job_dir, event_log) -> JobResult:
    return JobResult(
        job_id=spec.job_id,
        output_paths=outputs,
        task_states=states,
        wall_time=time.monotonic() - t0,
        job_dir=job_dir,
        event_log=event_log,
        killed_tasks=[t for t, s in states.items() if s.status == "killed"],
    )


def _collect_rejects(job_dir: str, result: JobResult) -> None:
    chunks = []
    for name in sorted(os.listdir(job_dir)):
        p = os.path.join(job_dir, name, "rejects")
        if name.startswith("map-") and os.path.exists(p):
            with open(p, "rb") as f:
                chunks.append(f.read())
    if chunks:
        path = os.path.join(job_dir, "rejects.txt")
        with open(path, "wb") as f:
            f.write(b"".join(chunks))
        result.rejects_path = path
