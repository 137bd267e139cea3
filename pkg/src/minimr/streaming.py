"""Run external executables as mappers/reducers over stdin/stdout lines.

Child contract: records arrive on stdin as ``key \\t value`` lines (same
escape codec as the on-disk record files), results leave on stdout in the
same format, stderr is captured for diagnostics but never parsed, and exit
code 0 means success. The child sees ``MR_TASK_ID``, ``MR_ROLE`` and
``MR_PARTITIONS`` in its environment. Feeding stdin and draining stdout run
concurrently, so a child may buffer its whole input without deadlocking the
bridge.
"""

from __future__ import annotations

import os
import queue
import shutil
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InputError, RecordCodecError, StreamingError
from .records import Record, decode_record, encode_record

__all__ = [
    "StreamingTaskSpec",
    "spawn_streaming_task",
    "encode_record",
    "decode_record",
]

_EOF = object()
_STDERR_TAIL = 8192


@dataclass(frozen=True)
class StreamingTaskSpec:
    argv: tuple[str, ...]  # executable followed by its arguments
    role: str = "mapper"  # "mapper" | "reducer"
    env: tuple[tuple[str, str], ...] = field(default_factory=tuple)
    io_timeout: float = 600.0

    def validate(self) -> None:
        """Check the executable exists and is runnable (job-plan time)."""
        exe = self.argv[0] if self.argv else ""
        if not exe:
            raise InputError("streaming spec has no executable")
        if shutil.which(exe) is None and not (os.path.isfile(exe) and os.access(exe, os.X_OK)):
            raise InputError("streaming executable not runnable: %s" % exe)


def _feed(proc: subprocess.Popen, records: Iterable[Record]) -> None:
    try:
        for record in records:
            proc.stdin.write(encode_record(record) + b"\n")
        proc.stdin.close()
    except (BrokenPipeError, OSError):
        # Child died or closed stdin early; the exit-status check decides.
        try:
            proc.stdin.close()
        except OSError:
            pass


def _drain(stream, sink: queue.Queue) -> None:
    while True:
        chunk = stream.read(65536)
        if not chunk:
            break
        sink.put(chunk)
    sink.put(_EOF)


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        pass
    try:
        proc.wait(timeout=5)
    except subprocess.TimeoutExpired:
        pass


def spawn_streaming_task(
    spec: StreamingTaskSpec,
    records: Iterable[Record],
    task_id: str = "local",
    num_partitions: int = 1,
    stop_event: Optional[threading.Event] = None,
) -> list[Record]:
    """Pipe records through the child executable; returns its output records.

    Failure modes each raise StreamingError with distinct diagnostics: spawn
    failure, io timeout with no stdout progress, malformed output record, or
    nonzero exit. A set stop_event terminates the child process group.
    """
    env = dict(os.environ)
    env.update(
        {"MR_TASK_ID": task_id, "MR_ROLE": spec.role, "MR_PARTITIONS": str(num_partitions)}
    )
    env.update(dict(spec.env))
    try:
        proc = subprocess.Popen(
            list(spec.argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
            start_new_session=True,
        )
    except OSError as exc:
        raise StreamingError("cannot spawn %s: %s" % (spec.argv, exc)) from exc

    out_q: queue.Queue = queue.Queue()
    err_q: queue.Queue = queue.Queue()
    threading.Thread(target=_feed, args=(proc, records), daemon=True).start()
    threading.Thread(target=_drain, args=(proc.stdout, out_q), daemon=True).start()
    threading.Thread(target=_drain, args=(proc.stderr, err_q), daemon=True).start()

    chunks: list[bytes] = []
    stderr_tail = b""
    last_progress = time.monotonic()
    eof = False
    while not eof:
        if stop_event is not None and stop_event.is_set():
            _kill_tree(proc)
            raise StreamingError("task %s: child terminated by scheduler stop" % task_id)
        if time.monotonic() - last_progress > spec.io_timeout:
            _kill_tree(proc)
            raise StreamingError(
                "task %s: no output progress within %.1fs" % (task_id, spec.io_timeout)
            )
        try:
            item = out_q.get(timeout=0.05)
        except queue.Empty:
            continue
        if item is _EOF:
            eof = True
        else:
            chunks.append(item)
            last_progress = time.monotonic()

    while True:
        try:
            item = err_q.get(timeout=spec.io_timeout)
        except queue.Empty:
            break
        if item is _EOF:
            break
        stderr_tail = (stderr_tail + item)[-_STDERR_TAIL:]

    try:
        returncode = proc.wait(timeout=spec.io_timeout)
    except subprocess.TimeoutExpired:
        _kill_tree(proc)
        raise StreamingError("task %s: child did not exit after closing stdout" % task_id)
    if returncode != 0:
        raise StreamingError(
            "task %s: child exited %d; stderr: %s"
            % (task_id, returncode, stderr_tail.decode("utf-8", "replace").strip())
        )

    data = b"".join(chunks)
    outputs = []
    try:
        for line in data.split(b"\n"):
            if line:
                outputs.append(decode_record(line))
    except RecordCodecError as exc:
        raise StreamingError("task %s: undecodable child output: %s" % (task_id, exc)) from exc
    return outputs
