"""Streaming bridge: codec parity, child protocol, failure modes, kills."""

import random
import threading
import time

import pytest

from minimr.errors import StreamingError
from minimr.records import Record, decode_record, encode_record
from minimr.streaming import StreamingTaskSpec, spawn_streaming_task

from conftest import make_script

IDENTITY_BODY = """
    import sys
    for line in sys.stdin.buffer:
        sys.stdout.buffer.write(line)
"""

BUFFER_ALL_BODY = """
    import sys
    data = sys.stdin.buffer.read()  # worst case: consume everything first
    sys.stdout.buffer.write(data)
"""

EXIT_1_BODY = """
    import sys
    sys.exit(1)
"""

SLEEP_FOREVER_BODY = """
    import sys, time
    sys.stdin.buffer.read()
    time.sleep(600)
"""

BAD_OUTPUT_BODY = """
    import sys
    sys.stdin.buffer.read()
    sys.stdout.write("key\\\\zvalue\\n")
"""

ENV_ECHO_BODY = """
    import os, sys
    sys.stdin.buffer.read()
    for name in ("MR_TASK_ID", "MR_ROLE", "MR_PARTITIONS"):
        sys.stdout.write("%s\\t%s\\n" % (name, os.environ[name]))
"""

SPAWN_CHILD_BODY = """
    import subprocess, sys, time
    child = subprocess.Popen([sys.executable, "-c", "import time; time.sleep(600)"])
    sys.stdout.write("child\\t%d\\n" % child.pid)
    sys.stdout.flush()
    time.sleep(600)
"""


def spec_for(tmp_path, name, body, **kw):
    argv = make_script(tmp_path / name, body)
    return StreamingTaskSpec(argv=tuple(argv), **kw)


def seeded_records(n, seed=0):
    rng = random.Random(seed)
    return [
        Record(
            bytes(rng.randrange(256) for _ in range(rng.randrange(0, 16))),
            bytes(rng.randrange(256) for _ in range(rng.randrange(0, 16))),
        )
        for _ in range(n)
    ]


def test_identity_child_round_trips_records(tmp_path):
    spec = spec_for(tmp_path, "identity.py", IDENTITY_BODY)
    records = seeded_records(500, seed=1)
    assert spawn_streaming_task(spec, records) == records


def test_exit_1_child_fails_task(tmp_path):
    spec = spec_for(tmp_path, "exit1.py", EXIT_1_BODY)
    with pytest.raises(StreamingError, match="exited 1"):
        spawn_streaming_task(spec, [Record(b"a", b"b")])


def test_undecodable_output_fails_task(tmp_path):
    spec = spec_for(tmp_path, "bad.py", BAD_OUTPUT_BODY)
    with pytest.raises(StreamingError, match="undecodable"):
        spawn_streaming_task(spec, [Record(b"a", b"b")])


def test_missing_executable_fails_at_validate(tmp_path):
    spec = StreamingTaskSpec(argv=(str(tmp_path / "nonexistent"),))
    from minimr.errors import InputError

    with pytest.raises(InputError):
        spec.validate()


def test_io_timeout_kills_silent_child(tmp_path):
    spec = spec_for(tmp_path, "sleep.py", SLEEP_FOREVER_BODY, io_timeout=0.5)
    t0 = time.monotonic()
    with pytest.raises(StreamingError, match="no output progress"):
        spawn_streaming_task(spec, [Record(b"a", b"b")])
    assert time.monotonic() - t0 < 5.0


def test_buffer_everything_child_does_not_deadlock(tmp_path):
    # input far beyond OS pipe capacity; the child reads all before writing
    spec = spec_for(tmp_path, "buffer.py", BUFFER_ALL_BODY)
    records = [Record(b"k%06d" % i, b"x" * 120) for i in range(20000)]  # ~2.5 MB
    out = spawn_streaming_task(spec, records)
    assert out == records


def test_child_sees_protocol_environment(tmp_path):
    spec = spec_for(tmp_path, "env.py", ENV_ECHO_BODY, role="reducer")
    out = spawn_streaming_task(spec, [], task_id="map-7", num_partitions=3)
    env = {r.key: r.value for r in out}
    assert env == {b"MR_TASK_ID": b"map-7", b"MR_ROLE": b"reducer", b"MR_PARTITIONS": b"3"}


def test_stop_event_terminates_child_process_tree(tmp_path):
    spec = spec_for(tmp_path, "spawner.py", SPAWN_CHILD_BODY, io_timeout=30.0)
    stop = threading.Event()
    got = {}

    def run():
        try:
            spawn_streaming_task(spec, [], stop_event=stop)
        except StreamingError as exc:
            got["error"] = str(exc)

    t = threading.Thread(target=run)
    t.start()
    time.sleep(0.5)  # let the child announce its grandchild
    stop.set()
    t.join(timeout=10)
    assert not t.is_alive()
    assert "terminated by scheduler stop" in got["error"]


def test_record_codec_reexported_for_child_authors():
    r = Record(b"tab\there", b"nl\nhere")
    assert decode_record(encode_record(r)) == r
