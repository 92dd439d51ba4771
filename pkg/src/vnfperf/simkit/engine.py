"""Event-driven simulator for open networks of multi-server FCFS queues.

One run is a single-threaded event loop over a time-ordered heap with
deterministic FIFO tie-breaking, so a (seed, config, network) triple fully
determines the event trace. Every queue's arrival stream, every service
stream, and the routing/multiplicity stream draw from independent
substreams spawned from the master seed.
"""

from __future__ import annotations

import csv
import math
import time
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import SimDiverged
from ..model import ValidatedNetwork
from .distributions import DistributionSpec, fit_distribution, make_sampler
from .stats import (
    N_EXT_ARRIVALS,
    SimReport,
    summarize_network,
    summarize_queue,
)

DEFAULT_BATCHES = 20
DEFAULT_QUEUE_CAP = 10_000_000


@dataclass(frozen=True)
class SimConfig:
    """Stop condition and reproducibility knobs for one simulation.

    The run processes ``warmup_packets`` service completions without
    collecting statistics, then ``measured_packets`` more while measuring.
    ``warmup_packets`` defaults to 10% of the measured count.
    """

    seed: int
    measured_packets: int = 4_000_000
    warmup_packets: int | None = None
    replications: int = 1

    def __post_init__(self):
        if self.measured_packets < 1:
            raise ValueError("measured_packets must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.warmup_packets is not None and self.warmup_packets < 0:
            raise ValueError("warmup_packets must be >= 0")

    @property
    def warmup(self) -> int:
        if self.warmup_packets is None:
            return self.measured_packets // 10
        return self.warmup_packets


def default_distributions(
    net: ValidatedNetwork,
) -> tuple[list[DistributionSpec | None], list[DistributionSpec]]:
    """Two-moment fits of each queue's arrival and service processes."""
    arrivals: list[DistributionSpec | None] = []
    services: list[DistributionSpec] = []
    for k in range(net.k):
        lam0 = float(net.ext_arrival_rate[k])
        if lam0 > 0.0:
            arrivals.append(
                fit_distribution(1.0 / lam0, float(net.ext_arrival_scv[k]))
            )
        else:
            arrivals.append(None)
        services.append(
            fit_distribution(
                1.0 / float(net.service_rate[k]), float(net.service_scv[k])
            )
        )
    return arrivals, services


def _check_specs(net, arrivals, services):
    if len(arrivals) != net.k or len(services) != net.k:
        raise ValueError("need one arrival and one service spec per queue")
    for k in range(net.k):
        lam0 = float(net.ext_arrival_rate[k])
        spec = arrivals[k]
        if lam0 > 0.0:
            if spec is None:
                raise ValueError(f"queue {k + 1} has external arrivals but no spec")
            if abs(spec.mean - 1.0 / lam0) > 1e-9 * max(1.0, 1.0 / lam0):
                raise ValueError(
                    f"queue {k + 1}: arrival mean {spec.mean!r} inconsistent "
                    f"with rate {lam0!r}"
                )
        elif spec is not None:
            raise ValueError(f"queue {k + 1} has no external arrivals but a spec")
        svc_mean = 1.0 / float(net.service_rate[k])
        if abs(services[k].mean - svc_mean) > 1e-9 * max(1.0, svc_mean):
            raise ValueError(
                f"queue {k + 1}: service mean {services[k].mean!r} inconsistent "
                f"with rate {net.service_rate[k]!r}"
            )


def simulate(
    net: ValidatedNetwork,
    arrivals,
    services,
    cfg: SimConfig,
    *,
    queue_cap: int = DEFAULT_QUEUE_CAP,
    batches: int = DEFAULT_BATCHES,
    trace_path=None,
) -> SimReport:
    """Simulate the network and return measured statistics with CIs.

    ``arrivals``/``services`` are per-queue :class:`DistributionSpec` lists;
    arrival entries must be None exactly where the network has no external
    arrivals, and all means must agree with the network's rates. Raises
    :class:`SimDiverged` if any queue's backlog exceeds ``queue_cap``.
    """
    t0 = time.perf_counter()
    _check_specs(net, arrivals, services)
    n_batches = max(1, min(batches, cfg.measured_packets))

    rep_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    queue_rows = [[] for _ in range(net.k)]
    net_rows = []
    totals = {"events": 0, "entered": 0, "exited": 0, "spawn": 0, "in_flight": 0}

    trace_file = None
    trace_writer = None
    try:
        if trace_path is not None:
            trace_file = open(trace_path, "w", newline="", encoding="utf-8")
            writer = csv.writer(trace_file)
            writer.writerow(["event_time", "event_type", "queue_id", "packet_id"])
            trace_writer = writer.writerow
        for rep_seed in rep_seeds:
            qrows, nrows, run_totals = _run(
                net, arrivals, services, rep_seed, cfg, queue_cap, n_batches,
                trace_writer,
            )
            for k in range(net.k):
                queue_rows[k].extend(qrows[k])
            net_rows.extend(nrows)
            for key in totals:
                totals[key] += run_totals[key]
    finally:
        if trace_file is not None:
            trace_file.close()

    nrows_arr = np.asarray(net_rows, dtype=float)
    total_external = int(nrows_arr[:, N_EXT_ARRIVALS].sum())
    per_queue = tuple(
        summarize_queue(
            k + 1,
            int(net.stage[k]),
            int(net.servers[k]),
            np.asarray(queue_rows[k], dtype=float),
            total_external,
        )
        for k in range(net.k)
    )
    resp_mean, resp_hw, resp_count = summarize_network(nrows_arr)
    return SimReport(
        per_queue=per_queue,
        mean_response_time=resp_mean,
        mean_response_time_hw=resp_hw,
        response_samples=resp_count,
        events_processed=totals["events"],
        packets_entered=totals["entered"],
        packets_exited=totals["exited"],
        packets_in_system=totals["in_flight"],
        spawn_balance=totals["spawn"],
        replications=cfg.replications,
        batches=len(net_rows),
        seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
    )


def _run(net, arrival_specs, service_specs, rep_seed, cfg, queue_cap, n_batches,
         trace):
    kq = net.k
    servers = [int(v) for v in net.servers]

    children = rep_seed.spawn(2 * kq + 1)
    arr_draw = [
        make_sampler(spec, np.random.Generator(np.random.PCG64(children[k])))
        if spec is not None
        else None
        for k, spec in enumerate(arrival_specs)
    ]
    svc_draw = [
        make_sampler(spec, np.random.Generator(np.random.PCG64(children[kq + k])))
        for k, spec in enumerate(service_specs)
    ]
    route_rng = np.random.Generator(np.random.PCG64(children[2 * kq]))

    # Per-queue routing tables: cumulative probabilities over the non-zero
    # destinations; a uniform draw past the last entry means network exit.
    route_cums: list[list[float]] = []
    route_dests: list[list[int]] = []
    for k in range(kq):
        row = net.routing[k]
        idx = np.where(row > 0.0)[0]
        route_dests.append([int(i) for i in idx])
        route_cums.append([float(c) for c in np.cumsum(row[idx])])
    mult_floor = [int(math.floor(v)) for v in net.multiplier]
    mult_frac = [float(v - math.floor(v)) for v in net.multiplier]

    queues = [deque() for _ in range(kq)]
    busy = [0] * kq
    area = [0.0] * kq
    busy_area = [0.0] * kq
    last_upd = [0.0] * kq
    b_arr = [0] * kq
    b_comp = [0] * kq
    b_wsum = [0.0] * kq
    b_wcnt = [0] * kq
    b_ssum = [0.0] * kq
    b_scnt = [0] * kq
    b_resp_sum = 0.0
    b_resp_cnt = 0
    b_ext = 0

    qrows = [[] for _ in range(kq)]
    nrows = []

    warm = cfg.warmup
    stop = warm + cfg.measured_packets
    quota = cfg.measured_packets // n_batches
    measuring = warm == 0
    t_warm = 0.0
    batch_start = 0.0
    batches_done = 0
    next_mark = warm if warm > 0 else (quota if n_batches > 1 else stop)

    events = 0
    processed = 0
    n_entered = 0
    n_exited = 0
    spawn_delta = 0
    pid_counter = 0

    ubuf: list[float] = []

    import heapq

    heap = []
    heappush = heapq.heappush
    heappop = heapq.heappop
    seq = 0
    for k in range(kq):
        draw = arr_draw[k]
        if draw is not None:
            heappush(heap, (draw(), seq, 0, k, 0.0, 0))
            seq += 1

    while True:
        ev = heappop(heap)
        events += 1
        t = ev[0]
        kind = ev[2]
        k = ev[3]

        if kind == 0:
            # External arrival: schedule the next one, then treat as enqueue.
            heappush(heap, (t + arr_draw[k](), seq, 0, k, 0.0, 0))
            seq += 1
            n_entered += 1
            pid = pid_counter
            pid_counter += 1
            if measuring:
                b_ext += 1
                b_arr[k] += 1
                dt = t - last_upd[k]
                if dt > 0.0:
                    area[k] += (len(queues[k]) + busy[k]) * dt
                    busy_area[k] += busy[k] * dt
                last_upd[k] = t
            if trace is not None:
                trace((t, "arrival", k + 1, pid))
            if busy[k] < servers[k]:
                busy[k] += 1
                s = svc_draw[k]()
                heappush(heap, (t + s, seq, 1, k, t, pid))
                seq += 1
                if measuring:
                    b_wcnt[k] += 1
                    b_ssum[k] += s
                    b_scnt[k] += 1
                if trace is not None:
                    trace((t, "start", k + 1, pid))
            else:
                dq = queues[k]
                dq.append((t, t, pid))
                if len(dq) > queue_cap:
                    raise SimDiverged(k + 1, len(dq), queue_cap)
            continue

        # Service completion at queue k.
        entry = ev[4]
        pid = ev[5]
        processed += 1
        if measuring:
            dt = t - last_upd[k]
            if dt > 0.0:
                area[k] += (len(queues[k]) + busy[k]) * dt
                busy_area[k] += busy[k] * dt
            last_upd[k] = t
            b_comp[k] += 1
        busy[k] -= 1
        if trace is not None:
            trace((t, "departure", k + 1, pid))

        dq = queues[k]
        if dq:
            enq_t, entry2, pid2 = dq.popleft()
            busy[k] += 1
            s = svc_draw[k]()
            heappush(heap, (t + s, seq, 1, k, entry2, pid2))
            seq += 1
            if measuring:
                b_wsum[k] += t - enq_t
                b_wcnt[k] += 1
                b_ssum[k] += s
                b_scnt[k] += 1
            if trace is not None:
                trace((t, "start", k + 1, pid2))

        # Flow multiplication, then independent routing per resulting packet.
        copies = mult_floor[k]
        frac = mult_frac[k]
        if frac > 0.0:
            if not ubuf:
                ubuf = route_rng.random(4096).tolist()
            if ubuf.pop() < frac:
                copies += 1
        spawn_delta += copies - 1
        cums = route_cums[k]
        dests = route_dests[k]
        for c in range(copies):
            if c == 0:
                cpid = pid
            else:
                cpid = pid_counter
                pid_counter += 1
            if not ubuf:
                ubuf = route_rng.random(4096).tolist()
            u = ubuf.pop()
            j = bisect_right(cums, u)
            if j >= len(cums):
                n_exited += 1
                if trace is not None:
                    trace((t, "exit", k + 1, cpid))
                if measuring and entry >= t_warm:
                    b_resp_sum += t - entry
                    b_resp_cnt += 1
                continue
            dest = dests[j]
            if measuring:
                dt = t - last_upd[dest]
                if dt > 0.0:
                    area[dest] += (len(queues[dest]) + busy[dest]) * dt
                    busy_area[dest] += busy[dest] * dt
                last_upd[dest] = t
                b_arr[dest] += 1
            if trace is not None:
                trace((t, "enqueue", dest + 1, cpid))
            if busy[dest] < servers[dest]:
                busy[dest] += 1
                s = svc_draw[dest]()
                heappush(heap, (t + s, seq, 1, dest, entry, cpid))
                seq += 1
                if measuring:
                    b_wcnt[dest] += 1
                    b_ssum[dest] += s
                    b_scnt[dest] += 1
                if trace is not None:
                    trace((t, "start", dest + 1, cpid))
            else:
                ddq = queues[dest]
                ddq.append((t, entry, cpid))
                if len(ddq) > queue_cap:
                    raise SimDiverged(dest + 1, len(ddq), queue_cap)

        if processed == next_mark:
            if not measuring:
                measuring = True
                t_warm = t
                batch_start = t
                for i in range(kq):
                    last_upd[i] = t
                next_mark = warm + quota if n_batches > 1 else stop
            else:
                duration = t - batch_start
                for i in range(kq):
                    dt = t - last_upd[i]
                    if dt > 0.0:
                        area[i] += (len(queues[i]) + busy[i]) * dt
                        busy_area[i] += busy[i] * dt
                    last_upd[i] = t
                    qrows[i].append(
                        (
                            duration,
                            b_arr[i],
                            b_comp[i],
                            b_wsum[i],
                            b_wcnt[i],
                            busy_area[i],
                            area[i],
                            b_ssum[i],
                            b_scnt[i],
                        )
                    )
                    b_arr[i] = 0
                    b_comp[i] = 0
                    b_wsum[i] = 0.0
                    b_wcnt[i] = 0
                    b_ssum[i] = 0.0
                    b_scnt[i] = 0
                    area[i] = 0.0
                    busy_area[i] = 0.0
                nrows.append((duration, b_resp_sum, b_resp_cnt, b_ext))
                b_resp_sum = 0.0
                b_resp_cnt = 0
                b_ext = 0
                batch_start = t
                batches_done += 1
                if processed >= stop:
                    break
                if batches_done < n_batches - 1:
                    next_mark = warm + quota * (batches_done + 1)
                else:
                    next_mark = stop

    in_flight = sum(len(queues[i]) + busy[i] for i in range(kq))
    run_totals = {
        "events": events,
        "entered": n_entered,
        "exited": n_exited,
        "spawn": spawn_delta,
        "in_flight": in_flight,
    }
    return qrows, nrows, run_totals
