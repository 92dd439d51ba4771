"""Baseline solver treating the network as an open Jackson network.

Every queue is analyzed as M/M/m regardless of the configured SCVs, which
is the classical product-form assumption. Shares the flow balance solve
with the two-moment solver, so multipliers other than 1 are allowed.
"""

from __future__ import annotations

import numpy as np

from . import qna
from .model import PerfReport, QueueMetrics, ValidatedNetwork


def analyze_jackson(net: ValidatedNetwork) -> PerfReport:
    """Per-queue M/M/m waits and the visit-ratio-weighted response time.

    Ignores every SCV field in the input: the report depends only on rates,
    server counts, multipliers and routing.
    """
    lam = qna.solve_flows(net)
    rho = qna.utilizations(net, lam)
    for k in range(net.k):
        if rho[k] >= 1.0:
            raise qna.UnstableQueue(k + 1, float(rho[k]))

    w = np.array(
        [
            qna.waiting_time_mmm(
                int(net.servers[k]), float(lam[k]), float(net.service_rate[k])
            )
            for k in range(net.k)
        ]
    )
    v = qna.visit_ratios(net, lam)
    sojourn = w + 1.0 / net.service_rate
    t = float(np.dot(sojourn, v))

    per_queue = tuple(
        QueueMetrics(
            queue_id=k + 1,
            stage=int(net.stage[k]),
            total_arrival_rate=float(lam[k]),
            arrival_scv=1.0,
            utilization=float(rho[k]),
            mean_wait=float(w[k]),
            mean_sojourn=float(sojourn[k]),
            visit_ratio=float(v[k]),
        )
        for k in range(net.k)
    )
    return PerfReport(per_queue=per_queue, mean_response_time=t, method="jackson")
