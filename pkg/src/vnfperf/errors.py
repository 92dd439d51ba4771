"""Exception types shared across the toolkit."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ValidationIssue:
    """One violated constraint found while validating a network description.

    ``code`` is one of the stable identifiers below; ``queue_id`` is the
    1-based queue index the issue refers to (None for network-level issues);
    ``field`` names the offending input field where applicable.
    """

    code: str
    message: str
    queue_id: int | None = None
    field: str | None = None

    def __str__(self) -> str:
        loc = ""
        if self.queue_id is not None:
            loc = f"queue {self.queue_id}"
            if self.field:
                loc += f".{self.field}"
            loc += ": "
        elif self.field:
            loc = f"{self.field}: "
        return f"[{self.code}] {loc}{self.message}"


# Stable issue codes.
NEGATIVE_PARAMETER = "NegativeParameter"
ROW_SUM_EXCEEDS_ONE = "RowSumExceedsOne"
NO_EXTERNAL_ARRIVALS = "NoExternalArrivals"
NON_CONTIGUOUS_STAGES = "NonContiguousStages"
BAD_SHAPE = "BadShape"


class ValidationError(ValueError):
    """Raised when a network description violates structural constraints.

    Carries the complete list of violations, not just the first one found.
    """

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        super().__init__(
            "invalid network description:\n  "
            + "\n  ".join(str(i) for i in self.issues)
        )


class UnstableQueue(RuntimeError):
    """A queue's offered load meets or exceeds its service capacity."""

    def __init__(self, queue_id: int | None, rho: float):
        self.queue_id = queue_id
        self.rho = rho
        where = f"queue {queue_id}" if queue_id is not None else "queue"
        super().__init__(f"{where} is unstable: utilization {rho:.6g} >= 1")


class SingularSystem(RuntimeError):
    """A linear system of the analysis has no usable solution.

    Typically the effective routing does not drain flow out of the network
    (spectral radius >= 1), or the solve failed a residual check.
    """


class SimDiverged(RuntimeError):
    """A simulated queue exceeded the configured backlog cap."""

    def __init__(self, queue_id: int, length: int, cap: int):
        self.queue_id = queue_id
        self.length = length
        self.cap = cap
        super().__init__(
            f"queue {queue_id} backlog reached {length} (cap {cap}); "
            "the configuration is unstable or the cap is too low"
        )


class TargetUnreachable(RuntimeError):
    """Horizontal scaling hit its instance cap without meeting the target."""

    def __init__(self, n_users: float, k_w: int, message: str = ""):
        self.n_users = n_users
        self.k_w = k_w
        super().__init__(
            message
            or f"response-time target unreachable at N_U={n_users:g} "
            f"with {k_w} worker instances"
        )
