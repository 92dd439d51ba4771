"""Batch-means statistics shared by the network and scenario simulators.

Measurements are split into fixed-count batches per replication; every
reported confidence interval is a Student-t interval over the pooled batch
means, so single-replication runs still get usable (autocorrelation-tolerant)
intervals and multi-replication runs pool all batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from ..model import PerfReport, QueueMetrics

# Queue batch row layout.
Q_DURATION = 0
Q_ARRIVALS = 1
Q_COMPLETIONS = 2
Q_WAIT_SUM = 3
Q_WAIT_COUNT = 4
Q_BUSY_TIME = 5
Q_AREA = 6
Q_SVC_SUM = 7
Q_SVC_COUNT = 8
QROW_LEN = 9

# Network batch row layout.
N_DURATION = 0
N_RESP_SUM = 1
N_RESP_COUNT = 2
N_EXT_ARRIVALS = 3
NROW_LEN = 4


def mean_hw(values) -> tuple[float, float]:
    """Mean and 95% Student-t half-width of a sequence of batch means."""
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n == 0:
        return math.nan, math.inf
    mean = float(arr.mean())
    if n < 2:
        return mean, math.inf
    sd = float(arr.std(ddof=1))
    return mean, float(sps.t.ppf(0.975, n - 1)) * sd / math.sqrt(n)


@dataclass(frozen=True)
class SimQueueStats:
    """Measured steady-state statistics for one simulated queue."""

    queue_id: int
    stage: int
    arrival_rate: float
    arrival_rate_hw: float
    utilization: float
    mean_wait: float
    mean_wait_hw: float
    mean_service: float
    mean_sojourn: float
    mean_in_system: float
    mean_in_system_hw: float
    little_law_gap: float
    little_law_gap_hw: float
    visit_ratio: float
    arrivals: int
    completions: int
    wait_samples: int


@dataclass(frozen=True)
class SimReport:
    """Aggregated output of a simulation run (all replications pooled).

    Counters cover the whole run from time zero; the statistics cover the
    post-warmup measurement window. ``spawn_balance`` is the net number of
    packets created (positive) or destroyed (negative) by flow multipliers,
    so ``packets_entered + spawn_balance - packets_exited`` equals the
    number of packets still in the system when the run stopped.
    """

    per_queue: tuple[SimQueueStats, ...]
    mean_response_time: float
    mean_response_time_hw: float
    response_samples: int
    events_processed: int
    packets_entered: int
    packets_exited: int
    packets_in_system: int
    spawn_balance: int
    replications: int
    batches: int
    seed: int
    wall_time: float

    def to_perf_report(self) -> PerfReport:
        per_queue = tuple(
            QueueMetrics(
                queue_id=s.queue_id,
                stage=s.stage,
                total_arrival_rate=s.arrival_rate,
                arrival_scv=math.nan,
                utilization=s.utilization,
                mean_wait=s.mean_wait,
                mean_sojourn=s.mean_sojourn,
                visit_ratio=s.visit_ratio,
            )
            for s in self.per_queue
        )
        return PerfReport(
            per_queue=per_queue,
            mean_response_time=self.mean_response_time,
            method="simulation",
        )


def summarize_queue(
    queue_id: int,
    stage: int,
    servers: int,
    rows: np.ndarray,
    total_external: int,
) -> SimQueueStats:
    """Fold one queue's batch rows into point estimates and intervals."""
    dur = rows[:, Q_DURATION]
    total_dur = float(dur.sum())
    arrivals = int(rows[:, Q_ARRIVALS].sum())
    completions = int(rows[:, Q_COMPLETIONS].sum())
    wait_count = int(rows[:, Q_WAIT_COUNT].sum())
    wait_sum = float(rows[:, Q_WAIT_SUM].sum())
    svc_count = int(rows[:, Q_SVC_COUNT].sum())
    svc_sum = float(rows[:, Q_SVC_SUM].sum())

    rate, rate_hw = mean_hw(rows[:, Q_ARRIVALS] / dur)
    nbar, nbar_hw = mean_hw(rows[:, Q_AREA] / dur)

    usable = (rows[:, Q_WAIT_COUNT] > 0) & (rows[:, Q_SVC_COUNT] > 0)
    wrows = rows[usable]
    if wrows.size:
        waits = wrows[:, Q_WAIT_SUM] / wrows[:, Q_WAIT_COUNT]
        _, wait_hw = mean_hw(waits)
        svcs = wrows[:, Q_SVC_SUM] / wrows[:, Q_SVC_COUNT]
        gaps = wrows[:, Q_AREA] / wrows[:, Q_DURATION] - (
            wrows[:, Q_ARRIVALS] / wrows[:, Q_DURATION]
        ) * (waits + svcs)
        gap, gap_hw = mean_hw(gaps)
    else:
        wait_hw, gap, gap_hw = math.inf, math.nan, math.inf

    mean_wait = wait_sum / wait_count if wait_count else 0.0
    mean_svc = svc_sum / svc_count if svc_count else math.nan
    return SimQueueStats(
        queue_id=queue_id,
        stage=stage,
        arrival_rate=arrivals / total_dur if total_dur else math.nan,
        arrival_rate_hw=rate_hw if math.isfinite(rate) else math.inf,
        utilization=(
            float(rows[:, Q_BUSY_TIME].sum()) / (servers * total_dur)
            if total_dur
            else math.nan
        ),
        mean_wait=mean_wait,
        mean_wait_hw=wait_hw,
        mean_service=mean_svc,
        mean_sojourn=mean_wait + (mean_svc if math.isfinite(mean_svc) else 0.0),
        mean_in_system=nbar,
        mean_in_system_hw=nbar_hw,
        little_law_gap=gap,
        little_law_gap_hw=gap_hw,
        visit_ratio=completions / total_external if total_external else math.nan,
        arrivals=arrivals,
        completions=completions,
        wait_samples=wait_count,
    )


def summarize_network(rows: np.ndarray) -> tuple[float, float, int]:
    """Pooled mean response time, its half-width, and the sample count."""
    resp_count = int(rows[:, N_RESP_COUNT].sum())
    pooled = float(rows[:, N_RESP_SUM].sum()) / resp_count if resp_count else math.nan
    usable = rows[rows[:, N_RESP_COUNT] > 0]
    if usable.size:
        _, hw = mean_hw(usable[:, N_RESP_SUM] / usable[:, N_RESP_COUNT])
    else:
        hw = math.inf
    return pooled, hw, resp_count
