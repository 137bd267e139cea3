"""Job-tracker style scheduler: slot-bounded dispatch, retries, kill policy.

Single-host realization of the tracker abstraction: nodes are logical worker
pools inside one process, each contributing ``map_slots`` worker threads.
All state changes and progress reports are serialized through one lock, so
tasks only ever exchange immutable descriptors and result values with the
coordinator. Kills are cooperative: a task learns it should stop from the
directive returned by its next progress report (or by polling its stop
event); the scheduler never interrupts a thread.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from threadpoolctl import threadpool_limits

from .errors import SchedulerProtocolError, TaskKilledError

KEEP = "keep"
KILL = "kill"

KILL_SENTINEL = b"-1"


@dataclass(frozen=True)
class TrackerNode:
    node_id: str
    map_slots: int = 1


@dataclass
class TaskDescriptor:
    task_id: str
    kind: str  # "map" | "reduce"
    payload: object = None
    attempt: int = 0
    max_attempts: int = 3
    excluded_node: Optional[str] = None  # node of the last failed attempt


@dataclass
class TaskState:
    status: str = "pending"  # pending | running | succeeded | failed | killed
    checkpoint_times: list = field(default_factory=list)  # (progress_unit, elapsed)
    result: object = None
    node_id: Optional[str] = None
    attempt: int = 0
    error: Optional[str] = None


@dataclass(frozen=True)
class TerminationPolicy:
    kill_factor: float  # F > 1
    checkpoint_unit: int = 2  # progress units before kill eligibility
    min_reference_count: int = 1

    def __post_init__(self):
        if self.kill_factor <= 1.0:
            raise ValueError("kill_factor must be > 1")


def evaluate_termination(
    policy: TerminationPolicy, t_ref: Optional[float], t_i: float
) -> str:
    """Kill iff t_i >= F * t_ref; with no reference time yet, always keep."""
    if t_ref is None:
        return KEEP
    return KILL if t_i >= policy.kill_factor * t_ref else KEEP


class TaskContext:
    """Handle a running task uses to talk to the coordinator."""

    def __init__(self, scheduler: "Scheduler", descriptor: TaskDescriptor, node_id: str):
        self._scheduler = scheduler
        self.task_id = descriptor.task_id
        self.attempt = descriptor.attempt
        self.node_id = node_id
        self.stop_event = threading.Event()
        self.kill_requested = False

    def report(self, progress_unit: int, elapsed: float) -> bool:
        """Record a checkpoint; returns True when the task must stop."""
        stop = self._scheduler.report_progress(self.task_id, progress_unit, elapsed)
        if stop:
            self.kill_requested = True
        return stop

    def should_stop(self) -> bool:
        return self.stop_event.is_set()


class Scheduler:
    """One job's coordinator: owns the authoritative task state table."""

    def __init__(
        self,
        nodes: list[TrackerNode],
        event_log_path: str,
        policy: Optional[TerminationPolicy] = None,
        max_attempts: int = 3,
    ):
        if not nodes or any(n.map_slots < 1 for n in nodes):
            raise ValueError("need at least one node with at least one slot")
        self.nodes = list(nodes)
        self.policy = policy
        self.max_attempts = max_attempts
        self._log = open(event_log_path, "ab")
        self._lock = threading.Condition()
        self.aborted = False
        self._states: dict[str, TaskState] = {}
        self._contexts: dict[str, TaskContext] = {}
        self._pending: deque = deque()
        # kill-policy reference state, per Scheduler lifetime (spans one job)
        self._t_ref: Optional[float] = None
        self._ref_count = 0
        self._cp_elapsed: dict[str, float] = {}

    # -- event log ---------------------------------------------------------

    def _event(self, event: str, task_id: str, detail: str = "") -> None:
        line = "%d\t%s\t%s\t%s\n" % (int(time.time() * 1000), event, task_id, detail)
        self._log.write(line.encode())
        self._log.flush()

    def close(self) -> None:
        self._log.close()

    # -- progress / termination --------------------------------------------

    def report_progress(self, task_id: str, progress_unit: int, elapsed: float) -> bool:
        """Record a checkpoint and return True iff the task must stop.

        t_ref is the running minimum elapsed time over tasks that completed
        ``checkpoint_unit`` progress units, and only becomes available once
        ``min_reference_count`` such tasks reported; until then nothing is
        ever killed.
        """
        with self._lock:
            state = self._states.get(task_id)
            if state is None or state.status != "running":
                raise SchedulerProtocolError("progress report from unknown task %r" % task_id)
            if state.checkpoint_times and progress_unit <= state.checkpoint_times[-1][0]:
                raise SchedulerProtocolError(
                    "non-increasing progress unit %d for task %s" % (progress_unit, task_id)
                )
            state.checkpoint_times.append((progress_unit, elapsed))

            ctx = self._contexts.get(task_id)
            if ctx is not None and ctx.stop_event.is_set():
                return True
            if self.policy is None:
                return False

            if progress_unit == self.policy.checkpoint_unit:
                self._cp_elapsed[task_id] = elapsed
                self._ref_count += 1
                if self._t_ref is None or elapsed < self._t_ref:
                    self._t_ref = elapsed
            t_i = self._cp_elapsed.get(task_id)
            if t_i is None:
                return False
            t_ref = self._t_ref if self._ref_count >= self.policy.min_reference_count else None
            if evaluate_termination(self.policy, t_ref, t_i) == KILL:
                self._event("kill", task_id, "t_i=%.6f t_ref=%.6f" % (t_i, t_ref))
                return True
            return False

    # -- dispatch loop -------------------------------------------------------

    def run(
        self,
        tasks: list[TaskDescriptor],
        execute: Callable[[TaskDescriptor, TaskContext], object],
    ) -> dict[str, TaskState]:
        """Run tasks to completion on the node pool; returns the state table.

        Dispatch is FIFO in the given task order and work-conserving; at most
        sum(map_slots) tasks run at once, at most ``map_slots`` per node.
        Failed tasks are retried (on a different node when one exists) until
        ``max_attempts`` attempts, after which the whole run aborts.
        """
        self._states = {t.task_id: TaskState() for t in tasks}
        self._contexts: dict[str, TaskContext] = {}
        self._pending = deque(tasks)
        self._n_terminal = 0
        self._n_total = len(tasks)
        self._execute_fn = execute
        if not tasks:
            return self._states

        workers = []
        for node in self.nodes:
            for slot in range(node.map_slots):
                w = threading.Thread(
                    target=self._worker, args=(node.node_id,), daemon=True,
                    name="worker-%s-%d" % (node.node_id, slot),
                )
                workers.append(w)
        # Tasks are single-threaded by contract; parallelism comes from slots.
        # Pinning the BLAS pools avoids oversubscription when slots > 1.
        with threadpool_limits(limits=1):
            for w in workers:
                w.start()
            for w in workers:
                w.join()
        return self._states

    def _take(self, node_id: str) -> Optional[TaskDescriptor]:
        """Pop the first pending task this node may run (holding the lock)."""
        multi_node = len(self.nodes) > 1
        for i, desc in enumerate(self._pending):
            if multi_node and desc.excluded_node == node_id:
                continue
            del self._pending[i]
            return desc
        return None

    def _worker(self, node_id: str) -> None:
        while True:
            with self._lock:
                desc = None
                while True:
                    if self._n_terminal >= self._n_total:
                        return
                    if self.aborted and not any(
                        s.status == "running" for s in self._states.values()
                    ):
                        return
                    if not self.aborted:
                        desc = self._take(node_id)
                        if desc is not None:
                            break
                    self._lock.wait(0.05)
                state = self._states[desc.task_id]
                state.status = "running"
                state.node_id = node_id
                state.attempt = desc.attempt
                ctx = TaskContext(self, desc, node_id)
                self._contexts[desc.task_id] = ctx
                self._event("dispatch", desc.task_id, "node=%s attempt=%d" % (node_id, desc.attempt))

            outcome, result, error = self._run_task(desc, ctx)
            with self._lock:
                self._contexts.pop(desc.task_id, None)
                if outcome == "succeeded":
                    state.status = "succeeded"
                    state.result = result
                    self._n_terminal += 1
                    self._event("success", desc.task_id, "node=%s" % node_id)
                elif outcome == "killed":
                    state.status = "killed"
                    state.result = result if result is not None else KILL_SENTINEL
                    self._n_terminal += 1
                    self._event("killed", desc.task_id, "node=%s" % node_id)
                else:
                    state.error = error
                    self._event("failure", desc.task_id, "node=%s attempt=%d error=%s"
                                % (node_id, desc.attempt, error))
                    if desc.attempt + 1 < desc.max_attempts:
                        retry = TaskDescriptor(
                            task_id=desc.task_id, kind=desc.kind, payload=desc.payload,
                            attempt=desc.attempt + 1, max_attempts=desc.max_attempts,
                            excluded_node=node_id,
                        )
                        state.status = "pending"
                        self._pending.appendleft(retry)
                        self._event("retry", desc.task_id, "attempt=%d excluded=%s"
                                    % (retry.attempt, node_id))
                    else:
                        state.status = "failed"
                        self._n_terminal += 1
                        self.aborted = True
                        self._pending.clear()
                        for other in self._contexts.values():
                            other.stop_event.set()
                        self._event("abort", desc.task_id, "attempts_exhausted")
                self._lock.notify_all()

    def _run_task(self, desc, ctx):
        try:
            result = self._execute_fn(desc, ctx)
            return "succeeded", result, None
        except TaskKilledError as exc:
            return "killed", exc.result, str(exc)
        except Exception as exc:  # noqa: BLE001 - any task error means "failed"
            return "failed", None, "%s: %s" % (type(exc).__name__, exc)
