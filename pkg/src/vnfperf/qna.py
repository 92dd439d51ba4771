"""Two-moment decomposition solver for open networks of G/G/m queues.

The network is reduced to isolated GI/G/1 / GI/G/m stations in three steps:
solve the linear flow balance for total arrival rates, solve a second linear
system for arrival-process SCVs (a convex combination of the asymptotic
superposition value and the exponential value 1), then apply per-queue
waiting-time approximations and aggregate by visit ratios. With all SCVs at 1
and unit multipliers the method reproduces the M/M/m product-form results
exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem, UnstableQueue
from .model import PerfReport, QueueMetrics, ValidatedNetwork

# Residual bound for both linear solves, relative to the solution norm.
RESIDUAL_TOL = 1e-10

# SCV solutions slightly below zero are clamped; anything below this is an
# error (the approximation scheme has no analytical nonnegativity guarantee,
# but large negatives mean the inputs are pathological).
SCV_CLAMP_TOL = -1e-9


@dataclass(frozen=True)
class FlowSolution:
    """Solved internal traffic parameters, kept for diagnostics.

    ``lam`` is the total arrival rate per queue. ``q`` has shape (K, K+1):
    ``q[k, i]`` is the proportion of arrivals to queue k+1 contributed by
    source i, where i = 0 is the external process and i >= 1 is queue i.
    ``b`` has shape (K, K) with ``b[i, k]`` weighting the SCV of queue i+1's
    arrivals in queue k+1's equation.
    """

    lam: np.ndarray
    q: np.ndarray
    arrival_scv: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray
    x: np.ndarray
    a: np.ndarray
    b: np.ndarray


def _spectral_radius(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mat)))) if mat.size else 0.0


def solve_flows(net: ValidatedNetwork) -> np.ndarray:
    """Total arrival rate per queue from the linear flow balance.

    Each queue's rate equals its external rate plus the multiplier-scaled
    flow routed to it from every other queue. Raises
    :class:`SingularSystem` when the effective routing does not drain
    (spectral radius >= 1) or the solve fails its residual check.
    """
    p = net.routing
    nu = net.multiplier
    lam0 = net.ext_arrival_rate

    # Flow transfer matrix: entry [i, k] is the expected number of packets
    # sent to queue k per packet arriving at queue i.
    transfer = p * nu[:, None]
    if _spectral_radius(transfer) >= 1.0:
        raise SingularSystem(
            "effective routing has spectral radius >= 1; flow never drains"
        )

    k = net.k
    try:
        lam = np.linalg.solve(np.eye(k) - transfer.T, lam0)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"flow balance solve failed: {exc}") from exc

    residual = lam - (lam0 + transfer.T @ lam)
    denom = float(np.max(np.abs(lam))) or 1.0
    if float(np.max(np.abs(residual))) / denom >= RESIDUAL_TOL:
        raise SingularSystem("flow balance residual check failed")
    return np.maximum(lam, 0.0)


def utilizations(net: ValidatedNetwork, lam: np.ndarray) -> np.ndarray:
    return lam / (net.service_rate * net.servers)


def _check_stable(net: ValidatedNetwork, lam: np.ndarray) -> np.ndarray:
    rho = utilizations(net, lam)
    for k in range(net.k):
        if rho[k] >= 1.0:
            raise UnstableQueue(k + 1, float(rho[k]))
    return rho


def solve_arrival_scvs(net: ValidatedNetwork, lam: np.ndarray) -> FlowSolution:
    """Arrival-process SCV per queue, via the linear approximation system.

    Builds the arrival-proportion matrix and the per-queue weights, then
    solves the K x K linear system coupling the arrival SCVs. Requires all
    utilizations strictly below 1.
    """
    rho = _check_stable(net, lam)
    k = net.k
    p = net.routing
    nu = net.multiplier

    q = np.zeros((k, k + 1))
    fed = lam > 0.0
    q[fed, 0] = net.ext_arrival_rate[fed] / lam[fed]
    contrib = lam[:, None] * nu[:, None] * p  # [i, k] internal flow i -> k
    q[fed, 1:] = (contrib[:, fed] / lam[fed]).T

    sum_sq = np.einsum("ki,ki->k", q, q)
    with np.errstate(divide="ignore"):
        gamma = np.where(sum_sq > 0.0, 1.0 / np.where(sum_sq > 0, sum_sq, 1.0), np.inf)
    omega = np.where(
        np.isinf(gamma), 0.0, 1.0 / (1.0 + 4.0 * (1.0 - rho) ** 2 * (gamma - 1.0))
    )

    x = 1.0 + net.servers ** (-0.5) * (np.maximum(net.service_scv, 0.2) - 1.0)

    # Per-queue constant term: external contribution plus the internal
    # splitting/feedback contribution of each upstream queue.
    internal = q[:, 1:].T  # [i, k] proportion of k's arrivals from queue i
    bracket = (
        q[:, 0] * net.ext_arrival_scv
        - 1.0
        + np.einsum(
            "ik,ik->k", internal, (1.0 - p) + nu[:, None] * p * (rho**2 * x)[:, None]
        )
    )
    a = 1.0 + omega * bracket

    b = internal * p * nu[:, None] * (1.0 - rho**2)[:, None] * omega[None, :]

    try:
        ca2 = np.linalg.solve(np.eye(k) - b.T, a)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"arrival SCV solve failed: {exc}") from exc
    residual = ca2 - (a + b.T @ ca2)
    denom = float(np.max(np.abs(ca2))) or 1.0
    if float(np.max(np.abs(residual))) / denom >= RESIDUAL_TOL:
        raise SingularSystem("arrival SCV residual check failed")

    low = ca2.min(initial=0.0)
    if low < SCV_CLAMP_TOL:
        raise ValueError(
            f"arrival SCV solve produced {low:.3e}; inputs are outside the "
            "approximation's usable range"
        )
    if low < 0.0:
        warnings.warn(
            f"clamping slightly negative arrival SCV {low:.3e} to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        ca2 = np.maximum(ca2, 0.0)

    return FlowSolution(
        lam=lam, q=q, arrival_scv=ca2, omega=omega, gamma=gamma, x=x, a=a, b=b
    )


def waiting_time_gg1(rho: float, mu: float, ca2: float, cs2: float) -> float:
    """Mean wait in a single-server queue from two-moment inputs.

    Kingman-style estimate with an exponential correction factor that
    tightens the result when the arrival process is smoother than Poisson.
    A fully deterministic queue (both SCVs zero) has no queueing delay.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"utilization must be in (0, 1), got {rho!r}")
    total = ca2 + cs2
    if ca2 >= 1.0:
        beta = 1.0
    elif total == 0.0:
        return 0.0
    else:
        beta = math.exp(-2.0 * (1.0 - rho) * (1.0 - ca2) ** 2 / (3.0 * rho * total))
    return rho * total * beta / (2.0 * mu * (1.0 - rho))


def erlang_c(m: int, rho: float) -> float:
    """Probability of waiting in an M/M/m queue at per-server utilization rho.

    Uses the stable blocking-probability recurrence instead of factorials,
    so large server counts do not overflow.
    """
    if m < 1 or m != int(m):
        raise ValueError(f"server count must be a positive integer, got {m!r}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"per-server utilization must be in (0, 1), got {rho!r}")
    offered = m * rho
    blocking = 1.0
    for j in range(1, int(m) + 1):
        blocking = offered * blocking / (j + offered * blocking)
    return blocking / (1.0 - rho * (1.0 - blocking))


def waiting_time_mmm(m: int, lam: float, mu: float) -> float:
    """Mean wait in an M/M/m queue."""
    if lam >= m * mu:
        raise UnstableQueue(None, lam / (m * mu))
    if lam <= 0.0:
        return 0.0
    return erlang_c(m, lam / (m * mu)) / (m * mu - lam)


def waiting_time_ggm(m: int, lam: float, mu: float, ca2: float, cs2: float) -> float:
    """Mean wait in a multi-server queue from two-moment inputs.

    Scales the M/M/m wait by the average of the two SCVs; exact for
    exponential arrivals and service, zero for deterministic flow.
    """
    return 0.5 * (ca2 + cs2) * waiting_time_mmm(m, lam, mu)


def visit_ratios(net: ValidatedNetwork, lam: np.ndarray) -> np.ndarray:
    """Mean number of visits each packet pays to each queue."""
    return lam / net.total_external_rate


def mean_waits(net: ValidatedNetwork, flow: FlowSolution) -> np.ndarray:
    """Per-queue mean waiting times from a solved flow description."""
    rho = utilizations(net, flow.lam)
    w = np.zeros(net.k)
    for k in range(net.k):
        if rho[k] == 0.0:
            continue
        if net.servers[k] == 1:
            w[k] = waiting_time_gg1(
                float(rho[k]),
                float(net.service_rate[k]),
                float(flow.arrival_scv[k]),
                float(net.service_scv[k]),
            )
        else:
            w[k] = waiting_time_ggm(
                int(net.servers[k]),
                float(flow.lam[k]),
                float(net.service_rate[k]),
                float(flow.arrival_scv[k]),
                float(net.service_scv[k]),
            )
    return w


def analyze(net: ValidatedNetwork) -> PerfReport:
    """Full decomposition pipeline: flows, arrival SCVs, waits, response time.

    Single-server queues use the refined :func:`waiting_time_gg1`;
    multi-server queues use :func:`waiting_time_ggm`. The network mean
    response time weights each queue's sojourn by its visit ratio.
    """
    lam = solve_flows(net)
    flow = solve_arrival_scvs(net, lam)
    rho = utilizations(net, lam)
    w = mean_waits(net, flow)
    v = visit_ratios(net, lam)
    sojourn = w + 1.0 / net.service_rate
    t = float(np.dot(sojourn, v))

    per_queue = tuple(
        QueueMetrics(
            queue_id=k + 1,
            stage=int(net.stage[k]),
            total_arrival_rate=float(lam[k]),
            arrival_scv=float(flow.arrival_scv[k]),
            utilization=float(rho[k]),
            mean_wait=float(w[k]),
            mean_sojourn=float(sojourn[k]),
            visit_ratio=float(v[k]),
        )
        for k in range(net.k)
    )
    return PerfReport(
        per_queue=per_queue, mean_response_time=t, method="qna", flows=flow
    )
