"""Network description data model, validation, and shared report types.

A network is an open set of multi-server FCFS queues with probabilistic
routing. Each queue carries two-moment descriptions of its external arrival
and service processes plus a multiplicative factor applied to departing
flow. All report and file indices are 1-based; internal arrays are 0-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import (
    BAD_SHAPE,
    NEGATIVE_PARAMETER,
    NO_EXTERNAL_ARRIVALS,
    NON_CONTIGUOUS_STAGES,
    ROW_SUM_EXCEEDS_ONE,
    ValidationError,
    ValidationIssue,
)

if TYPE_CHECKING:  # pragma: no cover
    from .qna import FlowSolution

# Absolute slack accepted on routing row sums above 1.0; absorbs decimal
# rounding in hand-written configs (e.g. rows built from thirds).
ROW_SUM_SLACK = 1e-9


@dataclass(frozen=True)
class QueueSpec:
    """One multi-server FCFS station of the network.

    Rates are in packets per second, per server. SCV fields are squared
    coefficients of variation (variance / mean^2). ``multiplier`` scales the
    departing flow and models creation or combination of packets at the node.
    ``ext_arrival_scv`` is kept but has no effect when ``ext_arrival_rate``
    is zero.
    """

    id: int
    stage: int
    servers: int
    service_rate: float
    service_scv: float
    ext_arrival_rate: float = 0.0
    ext_arrival_scv: float = 0.0
    multiplier: float = 1.0


@dataclass(frozen=True)
class RoutingMatrix:
    """Square matrix of transition probabilities, row = source queue.

    Row sums may fall short of 1; the deficit is the probability of leaving
    the network from that queue.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"routing matrix must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def exit_probabilities(self) -> np.ndarray:
        """Per-row probability of leaving the network, clamped to [0, 1]."""
        return np.clip(1.0 - self.entries.sum(axis=1), 0.0, 1.0)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered queues plus the routing matrix tying them together."""

    queues: tuple[QueueSpec, ...]
    routing: RoutingMatrix

    def __post_init__(self):
        object.__setattr__(self, "queues", tuple(self.queues))

    @property
    def size(self) -> int:
        return len(self.queues)


class ValidatedNetwork:
    """A structurally valid network with parameters exposed as arrays.

    Instances are only produced by :func:`validate_network`. All arrays are
    read-only and 0-indexed; ``spec`` retains the original description.
    """

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.k = spec.size
        self.servers = np.array([q.servers for q in spec.queues], dtype=int)
        self.service_rate = np.array([q.service_rate for q in spec.queues])
        self.service_scv = np.array([q.service_scv for q in spec.queues])
        self.ext_arrival_rate = np.array(
            [q.ext_arrival_rate for q in spec.queues]
        )
        self.ext_arrival_scv = np.array([q.ext_arrival_scv for q in spec.queues])
        self.multiplier = np.array([q.multiplier for q in spec.queues])
        self.stage = np.array([q.stage for q in spec.queues], dtype=int)
        self.routing = spec.routing.entries
        self.exit_prob = spec.routing.exit_probabilities()
        for arr in (
            self.servers,
            self.service_rate,
            self.service_scv,
            self.ext_arrival_rate,
            self.ext_arrival_scv,
            self.multiplier,
            self.stage,
            self.exit_prob,
        ):
            arr.setflags(write=False)

    @property
    def total_external_rate(self) -> float:
        return float(self.ext_arrival_rate.sum())


def _check_positive(issues, qid, name, value, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if not ok or not math.isfinite(value):
        bound = ">= 0" if allow_zero else "> 0"
        issues.append(
            ValidationIssue(
                NEGATIVE_PARAMETER,
                f"must be {bound}, got {value!r}",
                queue_id=qid,
                field=name,
            )
        )


def validate_network(net: NetworkSpec) -> ValidatedNetwork:
    """Check every structural constraint of a network description.

    Returns a :class:`ValidatedNetwork` on success. On failure raises
    :class:`ValidationError` carrying one issue per violation, so a bad
    config surfaces all of its problems at once. Validation is pure: it
    never mutates the input and repeated calls give identical results.
    """
    issues: list[ValidationIssue] = []
    k = net.size

    if k == 0:
        raise ValidationError(
            [ValidationIssue(BAD_SHAPE, "network has no queues")]
        )

    for pos, q in enumerate(net.queues):
        if q.id != pos + 1:
            issues.append(
                ValidationIssue(
                    NON_CONTIGUOUS_STAGES,
                    f"queue ids must be contiguous 1..K; position {pos + 1} "
                    f"has id {q.id}",
                    queue_id=q.id,
                    field="id",
                )
            )
        if q.servers < 1:
            issues.append(
                ValidationIssue(
                    NEGATIVE_PARAMETER,
                    f"must be >= 1, got {q.servers}",
                    queue_id=q.id,
                    field="servers",
                )
            )
        _check_positive(issues, q.id, "service_rate", q.service_rate)
        _check_positive(issues, q.id, "service_scv", q.service_scv, allow_zero=True)
        _check_positive(
            issues, q.id, "ext_arrival_rate", q.ext_arrival_rate, allow_zero=True
        )
        _check_positive(
            issues, q.id, "ext_arrival_scv", q.ext_arrival_scv, allow_zero=True
        )
        _check_positive(issues, q.id, "multiplier", q.multiplier)

    # Stage indices must tile 1..K into contiguous blocks: non-decreasing,
    # starting at 1, advancing by at most 1.
    stages = [q.stage for q in net.queues]
    for pos, s in enumerate(stages):
        prev = stages[pos - 1] if pos else 1
        if pos == 0:
            ok = s == 1
        else:
            ok = s in (prev, prev + 1)
        if not ok:
            issues.append(
                ValidationIssue(
                    NON_CONTIGUOUS_STAGES,
                    f"stage indices must form contiguous blocks starting at 1; "
                    f"queue {pos + 1} has stage {s} after stage {prev}",
                    queue_id=pos + 1,
                    field="stage",
                )
            )
            break

    if net.routing.size != k:
        issues.append(
            ValidationIssue(
                BAD_SHAPE,
                f"routing matrix is {net.routing.size}x{net.routing.size} "
                f"but the network has {k} queues",
                field="routing",
            )
        )
    else:
        p = net.routing.entries
        for i in range(k):
            row = p[i]
            neg = np.where(row < 0.0)[0]
            for j in neg:
                issues.append(
                    ValidationIssue(
                        NEGATIVE_PARAMETER,
                        f"routing probability p[{i + 1}][{j + 1}] = {row[j]!r} "
                        "is negative",
                        queue_id=i + 1,
                        field="routing",
                    )
                )
            total = float(row.sum())
            if total > 1.0 + ROW_SUM_SLACK:
                issues.append(
                    ValidationIssue(
                        ROW_SUM_EXCEEDS_ONE,
                        f"row sum {total!r} exceeds 1",
                        queue_id=i + 1,
                        field="routing",
                    )
                )

    if all(q.ext_arrival_rate == 0.0 for q in net.queues):
        issues.append(
            ValidationIssue(
                NO_EXTERNAL_ARRIVALS,
                "every queue has ext_arrival_rate = 0; an open network "
                "needs at least one external source",
            )
        )

    if issues:
        raise ValidationError(issues)
    return ValidatedNetwork(net)


# ---------------------------------------------------------------------------
# Report types shared by the analytical solvers and the simulators.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueueMetrics:
    """Steady-state metrics for one queue.

    ``mean_sojourn`` is always ``mean_wait`` plus the mean service time.
    ``visit_ratio`` is the queue's total arrival rate normalized by the
    network's total external arrival rate.
    """

    queue_id: int
    stage: int
    total_arrival_rate: float
    arrival_scv: float
    utilization: float
    mean_wait: float
    mean_sojourn: float
    visit_ratio: float


@dataclass(frozen=True)
class PerfReport:
    """Per-queue metrics plus the network mean response time.

    ``method`` identifies the producer: ``qna``, ``jackson`` or
    ``simulation``. ``flows`` holds solver diagnostics when available.
    """

    per_queue: tuple[QueueMetrics, ...]
    mean_response_time: float
    method: str
    flows: "FlowSolution | None" = None

    def recomputed_response_time(self) -> float:
        """Mean response time recomputed from the per-queue rows."""
        return sum(m.mean_sojourn * m.visit_ratio for m in self.per_queue)


# ---------------------------------------------------------------------------
# JSON round-trip (strict: unknown fields are rejected).
# ---------------------------------------------------------------------------

_QUEUE_FIELDS = {
    "id",
    "stage",
    "servers",
    "service_rate",
    "service_scv",
    "ext_arrival_rate",
    "ext_arrival_scv",
    "multiplier",
}
_REQUIRED_QUEUE_FIELDS = {"id", "stage", "servers", "service_rate", "service_scv"}
_TOP_FIELDS = {"queues", "routing"}


def network_from_dict(doc: dict) -> NetworkSpec:
    """Build a :class:`NetworkSpec` from a parsed JSON document.

    Raises ``ValueError`` naming the offending field on any unknown or
    missing key. Does not validate numeric constraints; that is
    :func:`validate_network`'s job.
    """
    if not isinstance(doc, dict):
        raise ValueError("network document must be a JSON object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ValueError(f"unknown network field(s): {sorted(unknown)}")
    missing = _TOP_FIELDS - set(doc)
    if missing:
        raise ValueError(f"missing network field(s): {sorted(missing)}")

    queues = []
    for pos, entry in enumerate(doc["queues"]):
        if not isinstance(entry, dict):
            raise ValueError(f"queues[{pos}] must be an object")
        unknown = set(entry) - _QUEUE_FIELDS
        if unknown:
            raise ValueError(
                f"queues[{pos}]: unknown field(s): {sorted(unknown)}"
            )
        missing = _REQUIRED_QUEUE_FIELDS - set(entry)
        if missing:
            raise ValueError(
                f"queues[{pos}]: missing field(s): {sorted(missing)}"
            )
        queues.append(
            QueueSpec(
                id=int(entry["id"]),
                stage=int(entry["stage"]),
                servers=int(entry["servers"]),
                service_rate=float(entry["service_rate"]),
                service_scv=float(entry["service_scv"]),
                ext_arrival_rate=float(entry.get("ext_arrival_rate", 0.0)),
                ext_arrival_scv=float(entry.get("ext_arrival_scv", 0.0)),
                multiplier=float(entry.get("multiplier", 1.0)),
            )
        )
    routing = RoutingMatrix(np.array(doc["routing"], dtype=float))
    return NetworkSpec(queues=tuple(queues), routing=routing)


def network_to_dict(net: NetworkSpec) -> dict:
    """Serialize a network description to a JSON-compatible dict."""
    return {
        "queues": [
            {
                "id": q.id,
                "stage": q.stage,
                "servers": q.servers,
                "service_rate": q.service_rate,
                "service_scv": q.service_scv,
                "ext_arrival_rate": q.ext_arrival_rate,
                "ext_arrival_scv": q.ext_arrival_scv,
                "multiplier": q.multiplier,
            }
            for q in net.queues
        ],
        "routing": net.routing.entries.tolist(),
    }


def load_network(path: str | Path) -> NetworkSpec:
    """Read a network description file (JSON)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return network_from_dict(doc)
