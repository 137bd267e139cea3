"""Benchmark harness: run a workload across slot counts, report runtimes.

Report format: one ``workload \\t slots \\t rep \\t seconds`` line per run,
then one ``# summary`` line per slot count carrying min/median/max wall time
and the mean per-task runtime (from the scheduler event log), which exposes
how oversubscription inflates individual task runtimes.
"""

from __future__ import annotations

import statistics
import time
from typing import Callable, Optional

# runner(slots, rep) -> event log path (or None when not applicable)
Runner = Callable[[int, int], Optional[str]]


def per_task_mean_runtime(event_log: str) -> Optional[float]:
    """Mean dispatch-to-terminal seconds per task attempt from an event log."""
    starts: dict[tuple[str, str], int] = {}
    durations = []
    with open(event_log, "rb") as f:
        for raw in f.read().splitlines():
            parts = raw.decode().split("\t")
            if len(parts) < 4:
                continue
            ts, event, task_id, detail = int(parts[0]), parts[1], parts[2], parts[3]
            if event == "dispatch":
                attempt = detail.split("attempt=")[-1]
                starts[(task_id, attempt)] = ts
            elif event in ("success", "killed", "failure"):
                for key in list(starts):
                    if key[0] == task_id:
                        durations.append((ts - starts.pop(key)) / 1000.0)
                        break
    if not durations:
        return None
    return sum(durations) / len(durations)


def run_bench(
    workload: str,
    runner: Runner,
    slot_list: list[int],
    repetitions: int,
    report_path: str,
) -> list[tuple[int, int, float]]:
    """Run ``runner`` at every slot count x repetition; write the report."""
    rows = []
    summaries = []
    for slots in slot_list:
        times = []
        task_means = []
        for rep in range(repetitions):
            t0 = time.monotonic()
            event_log = runner(slots, rep)
            dt = time.monotonic() - t0
            rows.append((slots, rep, dt))
            times.append(dt)
            if event_log:
                mean = per_task_mean_runtime(event_log)
                if mean is not None:
                    task_means.append(mean)
        summaries.append((
            slots,
            min(times),
            statistics.median(times),
            max(times),
            sum(task_means) / len(task_means) if task_means else float("nan"),
        ))
    with open(report_path, "w") as f:
        for slots, rep, dt in rows:
            f.write("%s\t%d\t%d\t%.6f\n" % (workload, slots, rep, dt))
        for slots, tmin, tmed, tmax, task_mean in summaries:
            f.write(
                "# summary\t%s\t%d\tmin=%.6f\tmedian=%.6f\tmax=%.6f\tavg_task_seconds=%.6f\n"
                % (workload, slots, tmin, tmed, tmax, task_mean)
            )
    return rows
