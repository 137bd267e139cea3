"""Single-host MapReduce-style engine with adaptive task termination.

Core pieces: record codec and split planning (`records`, `core`), the
slot-bounded tracker scheduler with the kill-factor policy (`scheduler`),
the stdin/stdout streaming bridge (`streaming`), and three built-in
workloads: kernel-SVM grid search (`svm`), bag-of-visual-words indexing
(`bovw`) and 3D Riesz-wavelet texture features (`riesz`).
"""

from .core import (
    InputSplit,
    JobResult,
    JobSpec,
    PartitionFile,
    partition,
    plan_splits,
    run_job,
    run_map_task,
    run_reduce_task,
    shuffle_group,
)
from .errors import (
    InputError,
    IntegrityError,
    JobFailedError,
    MiniMrError,
    RecordCodecError,
    SchedulerProtocolError,
    SolverError,
    StreamingError,
    TaskFailedError,
    TaskKilledError,
)
from .records import Record, decode_record, encode_record
from .scheduler import (
    Scheduler,
    TaskDescriptor,
    TaskState,
    TerminationPolicy,
    TrackerNode,
    evaluate_termination,
)
from .streaming import StreamingTaskSpec, spawn_streaming_task

__version__ = "0.1.0"
