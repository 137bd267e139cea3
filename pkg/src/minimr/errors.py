"""Exception taxonomy shared by the engine and the built-in workloads."""


class MiniMrError(Exception):
    """Base class for all engine errors."""


class InputError(MiniMrError):
    """Missing or unreadable job input (manifest, dataset, image, volume)."""


class RecordCodecError(MiniMrError):
    """Malformed escape sequence in a serialized record."""


class IntegrityError(MiniMrError):
    """Engine invariant violated (e.g. unsorted partition file); aborts the job."""


class TaskFailedError(MiniMrError):
    """A task attempt failed; the scheduler decides whether to retry."""


class TaskKilledError(MiniMrError):
    """Task terminated cooperatively by the kill policy after committing its sentinel output."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class JobFailedError(MiniMrError):
    """A task exhausted its retries; partial diagnostics stay in the workspace."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SchedulerProtocolError(MiniMrError):
    """Progress report from an unknown or non-running task."""


class StreamingError(TaskFailedError):
    """Streaming child failed: spawn error, timeout, decode error or nonzero exit."""


class SolverError(MiniMrError):
    """SVM solver did not converge; carries the last duality-gap estimate."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap
