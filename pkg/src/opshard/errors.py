"""Exception hierarchy shared across the package."""


class OpshardError(Exception):
    """Base class for every error raised by opshard."""


class InvalidInputError(OpshardError, ValueError):
    """An argument violates a documented precondition."""


class ProtocolError(OpshardError):
    """A statistics or schedule message does not match the job's shape."""


class ConsistencyError(ProtocolError):
    """Two successful attempts of one Map task reported different counts."""


class NotReadyError(OpshardError):
    """Aggregation was requested before every Map task reported."""


class SizeError(InvalidInputError):
    """Instance exceeds the exhaustive solver's guard limits."""


class IncompleteTraceError(OpshardError):
    """A trace is missing the anchor events needed to compute delays."""


class SlotFailure(OpshardError):
    """A Reduce slot could not finish its pipeline."""

    def __init__(self, slot: int, cluster: int | None, message: str):
        self.slot = slot
        self.cluster = cluster
        where = f"slot {slot}" if cluster is None else f"slot {slot}, cluster {cluster}"
        super().__init__(f"{where}: {message}")


class JobFailure(OpshardError):
    """The job aborted; the message carries the diagnostic."""
