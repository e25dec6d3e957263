"""Multi-worker adaptive integration with donor/receiver redistribution.

Each of P workers owns a region store and runs the batch adaptive loop.
Once per iteration all workers align at a metadata reduction (the only
global synchronization point): each contributes its partial integral and
error plus conservative bounds for regions it has sent but not yet seen
acknowledged, so convergence detection never undercounts work in transit.

After the reduction, workers holding more regions than the global fair
share donate their largest-error regions to workers holding fewer, paired
by a cyclic round-robin schedule and capped per message.  Only region
coordinates travel; receivers re-evaluate on arrival, and the donor keeps
the last estimates solely to price the in-flight bounds.

Two interchangeable backends implement the same protocol:

* ``deterministic_sim`` - a sequential round-based scheduler with virtual
  time (one unit per integrand evaluation, plus a small modeled cost per
  message).  Bit-reproducible; used by all correctness tests.
* ``concurrent`` - one thread per worker with queue-based messaging and
  barrier-aligned phases, reporting wall-clock compute/idle time.  The
  extra phase barriers keep its numerical results identical to the
  simulator's; only the timing columns differ.
"""

from __future__ import annotations

import math
import queue
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .driver import (
    DriverConfig,
    GlobalEstimate,
    IntegrationResult,
    TerminationReason,
    check_convergence,
    classify_filter_split,
    evaluate_batch,
    exact_sum,
    exact_sum_with,
)
from .regions import HyperRect, RegionStore, uniform_partition
from .rules import Integrand, apply_rule_batch, get_rule

__all__ = [
    "ProtocolError",
    "RedistributionConfig",
    "MetadataRecord",
    "TransferBatch",
    "TimeBreakdown",
    "WorkerState",
    "DistributedResult",
    "fair_share",
    "balance_role",
    "round_robin_pairs",
    "plan_transfer",
    "metadata_reduce",
    "run_distributed",
    "BACKENDS",
]

BACKENDS = ("deterministic_sim", "concurrent")


class ProtocolError(RuntimeError):
    """Iteration misalignment or a stalled message: the exchange is broken."""


@dataclass(frozen=True)
class RedistributionConfig:
    """Knobs of the redistribution protocol.

    ``cap`` limits regions per message; ``initial_subdomains_per_rank``
    sizes the startup partition (more subdomains than workers, dealt
    round-robin, so no rank starts with a single hard region).  The
    simulation-only fields model delivery latency (in iterations) and the
    virtual cost of a message.
    """

    cap: int = 512
    initial_subdomains_per_rank: int = 8
    policy: str = "round_robin"
    delivery_latency: int = 1
    max_unacked_iterations: int = 3
    msg_fixed_cost: float = 64.0
    msg_cost_per_region: float = 2.0

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if self.initial_subdomains_per_rank < 1:
            raise ValueError("initial_subdomains_per_rank must be >= 1")
        if self.policy != "round_robin":
            raise ValueError(f"unknown redistribution policy {self.policy!r}")
        if self.delivery_latency < 1:
            raise ValueError("delivery_latency must be >= 1")


@dataclass(frozen=True)
class MetadataRecord:
    """One worker's contribution to the per-iteration global reduction."""

    rank: int
    partial_integral: float
    partial_error: float
    inflight_integral_bound: float
    inflight_error_bound: float
    active_count: int


@dataclass
class TimeBreakdown:
    """Per-worker split of where the run's time went."""

    rank: int
    iterations: int
    compute_seconds: float
    idle_seconds: float
    messages_out: int
    regions_out: int


_WIRE_HEADER = struct.Struct("<IIQIH")


@dataclass
class TransferBatch:
    """A set of region coordinates moving from donor to receiver.

    Carries only geometry plus two conservative scalars: the sums of the
    donor's last error and |integral| estimates for the transferred
    regions, which the donor reports as in-flight bounds until the batch is
    acknowledged.
    """

    from_rank: int
    to_rank: int
    sequence_id: int
    lo: np.ndarray  # (m, d)
    hi: np.ndarray  # (m, d)
    attached_error_bound: float
    attached_integral_bound: float

    @property
    def count(self) -> int:
        return self.lo.shape[0]

    @property
    def rects(self) -> list[HyperRect]:
        return [HyperRect(self.lo[i].copy(), self.hi[i].copy()) for i in range(self.count)]

    def encode(self) -> bytes:
        """Little-endian framing: u32 from, u32 to, u64 seq, u32 count,
        u16 dim, count x (2d f64 bounds, lo-then-hi per axis), then the
        f64 error and integral bounds."""
        m, d = self.lo.shape
        bounds = np.empty((m, 2 * d))
        bounds[:, 0::2] = self.lo
        bounds[:, 1::2] = self.hi
        return (
            _WIRE_HEADER.pack(self.from_rank, self.to_rank, self.sequence_id, m, d)
            + bounds.astype("<f8").tobytes()
            + struct.pack("<dd", self.attached_error_bound, self.attached_integral_bound)
        )

    @classmethod
    def decode(cls, buf: bytes) -> "TransferBatch":
        if len(buf) < _WIRE_HEADER.size + 16:
            raise ProtocolError("transfer frame truncated")
        frm, to, seq, m, d = _WIRE_HEADER.unpack_from(buf, 0)
        expected = _WIRE_HEADER.size + m * 2 * d * 8 + 16
        if len(buf) != expected:
            raise ProtocolError(f"transfer frame has {len(buf)} bytes, expected {expected}")
        bounds = np.frombuffer(buf, dtype="<f8", count=m * 2 * d, offset=_WIRE_HEADER.size)
        bounds = bounds.reshape(m, 2 * d)
        err_b, int_b = struct.unpack_from("<dd", buf, _WIRE_HEADER.size + m * 2 * d * 8)
        return cls(
            from_rank=frm,
            to_rank=to,
            sequence_id=seq,
            lo=np.ascontiguousarray(bounds[:, 0::2], dtype=np.float64),
            hi=np.ascontiguousarray(bounds[:, 1::2], dtype=np.float64),
            attached_error_bound=err_b,
            attached_integral_bound=int_b,
        )


@dataclass
class WorkerState:
    """One worker's store, finalized carry and in-flight bookkeeping."""

    rank: int
    store: RegionStore
    finalized_integral: float = 0.0
    finalized_error: float = 0.0
    # sequence_id -> (sent_iteration, error_bound, integral_bound, region_count)
    outgoing_in_flight: dict[int, tuple[int, float, float, int]] = field(default_factory=dict)
    compute_time: float = 0.0
    idle_time: float = 0.0
    carry_cost: float = 0.0
    messages_out: int = 0
    regions_out: int = 0
    messages_in: int = 0
    regions_in: int = 0
    width_guard_hits: int = 0

    def inflight_region_count(self) -> int:
        return sum(m for _, _, _, m in self.outgoing_in_flight.values())

    def record(self) -> MetadataRecord:
        return MetadataRecord(
            rank=self.rank,
            partial_integral=exact_sum_with(self.finalized_integral, self.store.integral),
            partial_error=exact_sum_with(self.finalized_error, self.store.error),
            inflight_integral_bound=math.fsum(b for _, _, b, _ in self.outgoing_in_flight.values()),
            inflight_error_bound=math.fsum(b for _, b, _, _ in self.outgoing_in_flight.values()),
            active_count=len(self.store),
        )


# ---------------------------------------------------------------------------
# protocol operations


def fair_share(counts: Sequence[int]) -> float:
    """Mean active-region count per worker.

    A worker is a donor when it holds more than ceil(share) regions and a
    receiver when it holds fewer than floor(share); the integer thresholds
    keep sub-region differences from causing transfer thrash.
    """
    counts = list(counts)
    if not counts:
        raise ValueError("need at least one worker")
    return sum(counts) / len(counts)


def balance_role(count: int, share: float) -> str:
    if count > math.ceil(share):
        return "donor"
    if count < math.floor(share):
        return "receiver"
    return "neutral"


def _circle_pairs_even(p: int, rnd: int) -> list[tuple[int, int]]:
    # circle method with rank 0 fixed: in round r rank 0 meets r+1, and
    # ranks x, y >= 1 meet when (x-1) + (y-1) = 2r (mod p-1)
    m = p - 1
    pairs = [(0, rnd % m + 1)]
    for a in range(m):
        b = (2 * rnd - a) % m
        if a < b:
            pairs.append((a + 1, b + 1))
    return pairs


def round_robin_pairs(workers: int, rnd: int) -> list[tuple[int, int]]:
    """Disjoint worker pairs for a given round of the cyclic schedule.

    Tournament (circle-method) pairing: over P-1 rounds for even P (P
    rounds for odd P, with one worker sitting out per round) every
    unordered pair appears exactly once, with no negotiation needed since
    every worker derives the same schedule from the shared round counter.
    """
    if workers < 2:
        return []
    if workers % 2:
        pairs = _circle_pairs_even(workers + 1, rnd % workers)
        return [(a, b) for a, b in pairs if a != workers and b != workers]
    return _circle_pairs_even(workers, rnd % (workers - 1))


TakeTop = Callable[[int, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


def plan_transfer(
    pair: tuple[int, int],
    counts: Sequence[int],
    take_top: TakeTop,
    cfg: RedistributionConfig,
    sequence_id: int = 0,
) -> TransferBatch | None:
    """Decide and build the transfer for one scheduled pair, if any.

    A batch moves only from a donor to a receiver; donor-donor,
    receiver-receiver and any pairing involving a neutral worker produce no
    transfer.  The batch takes the donor's largest-error regions, sized by
    the smaller of donor excess, receiver deficit and the message cap.
    ``take_top(rank, n)`` must remove and return up to n top-error rows
    (lo, hi, error, integral) from that worker's store.
    """
    a, b = pair
    share = fair_share(counts)
    role_a, role_b = balance_role(counts[a], share), balance_role(counts[b], share)
    if {role_a, role_b} != {"donor", "receiver"}:
        return None
    donor, receiver = (a, b) if role_a == "donor" else (b, a)
    excess = counts[donor] - math.ceil(share)
    deficit = math.floor(share) - counts[receiver]
    n = min(cfg.cap, excess, deficit)
    if n < 1:
        return None
    lo, hi, err, integ = take_top(donor, n)
    if lo.shape[0] == 0:
        return None
    return TransferBatch(
        from_rank=donor,
        to_rank=receiver,
        sequence_id=sequence_id,
        lo=lo,
        hi=hi,
        attached_error_bound=exact_sum(err),
        attached_integral_bound=exact_sum(np.abs(integ)),
    )


def metadata_reduce(
    records: Sequence[MetadataRecord], cfg: DriverConfig
) -> tuple[float, float, bool]:
    """Combine per-worker records into global estimates and a stop decision.

    Every region is counted exactly once: settled regions through their
    owner's partials, in-transit regions through the sender's attached
    bounds.  The error side is therefore conservative - work in flight can
    only delay convergence, never fake it.
    """
    ranks = sorted(r.rank for r in records)
    if ranks != list(range(len(records))):
        raise ProtocolError(f"metadata records misaligned: got ranks {ranks}")
    ordered = sorted(records, key=lambda r: r.rank)
    integral = math.fsum(
        [r.partial_integral for r in ordered] + [r.inflight_integral_bound for r in ordered]
    )
    error = math.fsum(
        [r.partial_error for r in ordered] + [r.inflight_error_bound for r in ordered]
    )
    converged = error <= max(cfg.abs_floor, abs(integral) * cfg.tau_rel)
    return integral, error, converged


# ---------------------------------------------------------------------------
# shared engine helpers


@dataclass
class DistributedResult:
    """Outcome of a multi-worker run.

    ``result`` carries the settled estimates; ``final_reduce_*`` keep the
    (conservative) global estimates from the last metadata reduction, i.e.
    what the convergence decision was actually based on.
    """

    result: IntegrationResult
    timings: list[TimeBreakdown]
    messages_total: int
    regions_transferred_total: int
    final_reduce_integral: float = math.nan
    final_reduce_error: float = math.inf
    iteration_log: list[dict] | None = None


def _initial_workers(domain: HyperRect, workers: int, rcfg: RedistributionConfig) -> list[WorkerState]:
    parts = uniform_partition(domain, workers * rcfg.initial_subdomains_per_rank)
    states = []
    for rank in range(workers):
        mine = parts[rank::workers]
        store = RegionStore.from_rects(mine) if mine else RegionStore(domain.dim)
        states.append(WorkerState(rank=rank, store=store))
    return states


def _take_top_factory(states: list[WorkerState]) -> TakeTop:
    def take_top(rank: int, n: int):
        store = states[rank].store
        n = min(n, len(store))
        if n == 0:
            d = store.d
            return np.empty((0, d)), np.empty((0, d)), np.empty(0), np.empty(0)
        order = np.argsort(-store.error, kind="stable")[:n]
        batch = store.extract(order)
        return batch.lo, batch.hi, batch.error, batch.integral

    return take_top


def _apply_acks(states: list[WorkerState], acks: list[tuple[int, int]]) -> None:
    for sender, seq in acks:
        states[sender].outgoing_in_flight.pop(seq, None)


def _deliver(state: WorkerState, batch: TransferBatch) -> None:
    state.store.append_batch(batch.lo, batch.hi)
    state.messages_in += 1
    state.regions_in += batch.count


def _settle(
    states: list[WorkerState],
    pending: list[TransferBatch],
    table,
    f: Integrand,
) -> tuple[float, float, int]:
    """Deliver whatever is still in flight, evaluate it, and re-reduce.

    Returns the settled global integral and error plus the extra integrand
    evaluations spent on late arrivals.
    """
    extra_evals = 0
    for batch in sorted(pending, key=lambda b: (b.from_rank, b.sequence_id)):
        state = states[batch.to_rank]
        tail_start = len(state.store)
        _deliver(state, batch)
        lo = state.store.lo[tail_start:]
        hi = state.store.hi[tail_start:]
        integral, error, scores, evals = apply_rule_batch(table, lo, hi, f)
        state.store.integral[tail_start:] = integral
        state.store.error[tail_start:] = error
        state.store.split_axis[tail_start:] = np.argmax(scores, axis=1)
        extra_evals += evals
        states[batch.from_rank].outgoing_in_flight.pop(batch.sequence_id, None)
    values_i: list[float] = []
    values_e: list[float] = []
    for s in states:
        values_i.append(s.finalized_integral)
        values_e.append(s.finalized_error)
        values_i.extend(s.store.integral.tolist())
        values_e.extend(s.store.error.tolist())
    return math.fsum(values_i), math.fsum(values_e), extra_evals


# ---------------------------------------------------------------------------
# deterministic simulation backend


def _run_simulation(
    f: Integrand,
    domain: HyperRect,
    cfg: DriverConfig,
    rcfg: RedistributionConfig,
    workers: int,
    collect_log: bool,
) -> DistributedResult:
    table = get_rule(cfg.rule, domain.dim)
    states = _initial_workers(domain, workers, rcfg)
    take_top = _take_top_factory(states)
    # inbox entries: (deliver_iteration, TransferBatch)
    inboxes: list[list[tuple[int, TransferBatch]]] = [[] for _ in range(workers)]
    log: list[dict] = []
    seq_counter = 0
    total_evals = 0
    peak = sum(len(s.store) for s in states)
    expected_census = peak
    virtual_now = 0.0

    iteration = 0
    reason: TerminationReason | None = None
    converged = False
    last_global = (math.nan, math.inf)

    while True:
        iteration += 1
        it = iteration - 1  # 0-based round counter shared by all ranks

        # liveness guard, then deliveries; acknowledgments take effect at
        # this iteration's metadata exchange
        for s in states:
            for seq, (sent_it, _, _, _) in s.outgoing_in_flight.items():
                if it - sent_it > rcfg.max_unacked_iterations:
                    raise ProtocolError(
                        f"batch {seq} from rank {s.rank} unacknowledged for "
                        f"{it - sent_it} iterations"
                    )
        acks: list[tuple[int, int]] = []
        for rank, inbox in enumerate(inboxes):
            due = [entry for entry in inbox if entry[0] <= it]
            inbox[:] = [entry for entry in inbox if entry[0] > it]
            for _, batch in sorted(due, key=lambda e: (e[1].from_rank, e[1].sequence_id)):
                _deliver(states[rank], batch)
                acks.append((batch.from_rank, batch.sequence_id))
        _apply_acks(states, acks)

        # evaluate every store; virtual work = integrand evaluations plus
        # the carried cost of last iteration's sends
        work = np.zeros(workers)
        for s in states:
            evaluate_batch(s.store, table, f, finalized=(s.finalized_integral, s.finalized_error))
            evals = len(s.store) * table.node_count
            total_evals += evals
            work[s.rank] = evals + s.carry_cost
            s.carry_cost = 0.0
        peak = max(peak, sum(len(s.store) for s in states))

        # the one global synchronization point
        records = [s.record() for s in states]
        global_i, global_e, converged = metadata_reduce(records, cfg)
        last_global = (global_i, global_e)
        arrivals = virtual_now + work
        virtual_now = float(arrivals.max()) if workers else virtual_now
        for s in states:
            s.compute_time += float(work[s.rank])
            s.idle_time += float(virtual_now - arrivals[s.rank])

        if converged:
            reason = TerminationReason.TOLERANCE
            break
        if iteration >= cfg.max_iterations:
            reason = TerminationReason.MAX_ITERATIONS
            break

        # fused filter/split per worker, against the global estimate
        split_total = 0
        finalized_total = 0
        for s in states:
            outcome = classify_filter_split(
                s.store,
                GlobalEstimate(global_i, global_e, s.finalized_integral, s.finalized_error, len(s.store)),
                cfg,
                domain,
            )
            s.store = outcome.store
            s.finalized_integral = outcome.finalized_integral
            s.finalized_error = outcome.finalized_error
            s.width_guard_hits += outcome.width_guard_hits
            split_total += outcome.split_count
            finalized_total += outcome.finalized_count
        if any(len(s.store) > cfg.max_regions for s in states):
            reason = TerminationReason.MAX_REGIONS
            break

        # redistribution: donors stream top-error regions to receivers
        counts = [r.active_count for r in records]
        transfers: list[tuple[int, int, int]] = []
        for pair in round_robin_pairs(workers, it):
            batch = plan_transfer(pair, counts, take_top, rcfg, sequence_id=seq_counter)
            if batch is None:
                continue
            seq_counter += 1
            wire = batch.encode()
            delivered = TransferBatch.decode(wire)
            inboxes[batch.to_rank].append((it + rcfg.delivery_latency, delivered))
            sender = states[batch.from_rank]
            sender.outgoing_in_flight[batch.sequence_id] = (
                it,
                batch.attached_error_bound,
                batch.attached_integral_bound,
                batch.count,
            )
            sender.carry_cost += rcfg.msg_fixed_cost + rcfg.msg_cost_per_region * batch.count
            sender.messages_out += 1
            sender.regions_out += batch.count
            transfers.append((batch.from_rank, batch.to_rank, batch.count))

        # integer census: regions are neither lost nor duplicated by the
        # filter/split/transfer machinery
        expected_census = expected_census - finalized_total + split_total
        census = sum(len(s.store) for s in states) + sum(
            s.inflight_region_count() for s in states
        )
        if census != expected_census:
            raise ProtocolError(
                f"region census broken at iteration {iteration}: "
                f"{census} present vs {expected_census} expected"
            )
        if collect_log:
            log.append(
                {
                    "iteration": iteration,
                    "counts": counts,
                    "post_split_counts": [len(s.store) for s in states],
                    "inflight_regions": sum(s.inflight_region_count() for s in states),
                    "inflight_batches": sum(len(s.outgoing_in_flight) for s in states),
                    "transfers": transfers,
                    "global_integral": global_i,
                    "global_error": global_e,
                    "census": census,
                }
            )

        if census == 0:
            reason = TerminationReason.WIDTH_GUARD_EXHAUSTED
            break

    pending = [batch for inbox in inboxes for _, batch in inbox]
    settled_i, settled_e, extra = _settle(states, pending, table, f)
    total_evals += extra
    if reason is TerminationReason.WIDTH_GUARD_EXHAUSTED:
        final = GlobalEstimate(settled_i, settled_e, settled_i, settled_e, 0)
        if check_convergence(final, cfg):
            reason = TerminationReason.TOLERANCE
            converged = True
    result = IntegrationResult(
        integral=settled_i,
        error=settled_e,
        converged=converged,
        iterations=iteration,
        total_f_evals=total_evals,
        peak_regions=peak,
        termination_reason=reason,
    )
    timings = [
        TimeBreakdown(
            rank=s.rank,
            iterations=iteration,
            compute_seconds=s.compute_time,
            idle_seconds=s.idle_time,
            messages_out=s.messages_out,
            regions_out=s.regions_out,
        )
        for s in states
    ]
    return DistributedResult(
        result=result,
        timings=timings,
        messages_total=sum(s.messages_out for s in states),
        regions_transferred_total=sum(s.regions_out for s in states),
        final_reduce_integral=last_global[0],
        final_reduce_error=last_global[1],
        iteration_log=log if collect_log else None,
    )


# ---------------------------------------------------------------------------
# concurrent (threaded) backend


class _Bus:
    """Shared state for the threaded backend's phase-aligned iteration.

    Three barriers per iteration keep the phases aligned: after receive
    (so all acknowledgments are posted before anyone reads them), after
    the record posting (the metadata exchange proper), and after
    redistribution (so deliveries land deterministically at the start of
    the next iteration).  Shared flags are written strictly between
    barriers and read strictly after the next one.
    """

    def __init__(self, workers: int):
        self.barrier = threading.Barrier(workers)
        self.queues: list[queue.SimpleQueue] = [queue.SimpleQueue() for _ in range(workers)]
        self.lock = threading.Lock()
        self.acks: list[tuple[int, int]] = []
        self.records: list[MetadataRecord | None] = [None] * workers
        self.post_split: list[int] = [0] * workers
        self.inflight: list[int] = [0] * workers
        self.stop_flags: list[TerminationReason | None] = [None] * workers
        self.peak = 0
        self.failure: BaseException | None = None


def _run_concurrent(
    f: Integrand,
    domain: HyperRect,
    cfg: DriverConfig,
    rcfg: RedistributionConfig,
    workers: int,
    collect_log: bool,
) -> DistributedResult:
    table = get_rule(cfg.rule, domain.dim)
    states = _initial_workers(domain, workers, rcfg)
    bus = _Bus(workers)
    bus.peak = sum(len(s.store) for s in states)
    seq_base = 1 << 20  # rank-disjoint sequence id blocks
    results: dict[int, tuple[float, float, bool, int, TerminationReason]] = {}
    evals_by_rank = [0] * workers

    def wait(s: WorkerState) -> None:
        t0 = time.perf_counter()
        bus.barrier.wait()
        s.idle_time += time.perf_counter() - t0

    def worker_loop(rank: int) -> None:
        s = states[rank]
        seq_counter = seq_base * (rank + 1)
        iteration = 0
        converged = False
        reason = TerminationReason.MAX_ITERATIONS
        global_i, global_e = math.nan, math.inf
        try:
            while True:
                iteration += 1
                it = iteration - 1

                # receive deliveries, post acknowledgments
                incoming = []
                while True:
                    try:
                        incoming.append(TransferBatch.decode(bus.queues[rank].get_nowait()))
                    except queue.Empty:
                        break
                with bus.lock:
                    for batch in sorted(incoming, key=lambda b: (b.from_rank, b.sequence_id)):
                        _deliver(s, batch)
                        bus.acks.append((batch.from_rank, batch.sequence_id))
                wait(s)

                # acknowledgments take effect at this metadata exchange
                with bus.lock:
                    mine = [a for a in bus.acks if a[0] == rank]
                    for a in mine:
                        bus.acks.remove(a)
                for _, sq in mine:
                    s.outgoing_in_flight.pop(sq, None)

                t0 = time.perf_counter()
                evaluate_batch(
                    s.store, table, f, finalized=(s.finalized_integral, s.finalized_error)
                )
                evals_by_rank[rank] += len(s.store) * table.node_count
                s.compute_time += time.perf_counter() - t0
                bus.records[rank] = s.record()
                wait(s)

                records = [r for r in bus.records if r is not None]
                global_i, global_e, converged = metadata_reduce(records, cfg)
                counts = [r.active_count for r in records]
                if rank == 0:
                    bus.peak = max(bus.peak, sum(counts))
                if converged:
                    reason = TerminationReason.TOLERANCE
                    break
                if iteration >= cfg.max_iterations:
                    reason = TerminationReason.MAX_ITERATIONS
                    break

                t0 = time.perf_counter()
                outcome = classify_filter_split(
                    s.store,
                    GlobalEstimate(
                        global_i, global_e, s.finalized_integral, s.finalized_error, len(s.store)
                    ),
                    cfg,
                    domain,
                )
                s.store = outcome.store
                s.finalized_integral = outcome.finalized_integral
                s.finalized_error = outcome.finalized_error
                s.width_guard_hits += outcome.width_guard_hits
                bus.stop_flags[rank] = (
                    TerminationReason.MAX_REGIONS if len(s.store) > cfg.max_regions else None
                )

                def take_top(r: int, n: int, _rank=rank):
                    if r != _rank:
                        # donors extract only from their own store here; the
                        # receiver side of a pair plans nothing
                        d = states[r].store.d
                        return np.empty((0, d)), np.empty((0, d)), np.empty(0), np.empty(0)
                    return _take_top_factory(states)(r, n)

                for pair in round_robin_pairs(workers, it):
                    if rank not in pair:
                        continue
                    batch = plan_transfer(pair, counts, take_top, rcfg, sequence_id=seq_counter)
                    if batch is None or batch.from_rank != rank:
                        continue
                    seq_counter += 1
                    bus.queues[batch.to_rank].put(batch.encode())
                    s.outgoing_in_flight[batch.sequence_id] = (
                        it,
                        batch.attached_error_bound,
                        batch.attached_integral_bound,
                        batch.count,
                    )
                    s.messages_out += 1
                    s.regions_out += batch.count
                s.compute_time += time.perf_counter() - t0
                bus.post_split[rank] = len(s.store)
                bus.inflight[rank] = s.inflight_region_count()
                wait(s)

                # flags written during the phase above are stable now and
                # read identically by every rank
                tripped = next((fl for fl in bus.stop_flags if fl is not None), None)
                if tripped is not None:
                    reason = tripped
                    break
                if sum(bus.post_split) + sum(bus.inflight) == 0:
                    reason = TerminationReason.WIDTH_GUARD_EXHAUSTED
                    break
            results[rank] = (global_i, global_e, converged, iteration, reason)
        except BaseException as exc:  # propagate to the caller
            bus.failure = exc
            bus.barrier.abort()

    threads = [threading.Thread(target=worker_loop, args=(r,)) for r in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if bus.failure is not None:
        raise bus.failure

    iteration = results[0][3]
    converged = results[0][2]
    reason = results[0][4]
    last_reduce = (results[0][0], results[0][1])
    # anything left in queues is settled on the main thread
    pending = []
    for q in bus.queues:
        while True:
            try:
                pending.append(TransferBatch.decode(q.get_nowait()))
            except queue.Empty:
                break
    settled_i, settled_e, extra = _settle(states, pending, table, f)
    if reason is TerminationReason.WIDTH_GUARD_EXHAUSTED:
        final = GlobalEstimate(settled_i, settled_e, settled_i, settled_e, 0)
        if check_convergence(final, cfg):
            converged = True
            reason = TerminationReason.TOLERANCE
    result = IntegrationResult(
        integral=settled_i,
        error=settled_e,
        converged=converged,
        iterations=iteration,
        total_f_evals=sum(evals_by_rank) + extra,
        peak_regions=bus.peak,
        termination_reason=reason,
    )
    timings = [
        TimeBreakdown(
            rank=s.rank,
            iterations=iteration,
            compute_seconds=s.compute_time,
            idle_seconds=s.idle_time,
            messages_out=s.messages_out,
            regions_out=s.regions_out,
        )
        for s in states
    ]
    return DistributedResult(
        result=result,
        timings=timings,
        messages_total=sum(s.messages_out for s in states),
        regions_transferred_total=sum(s.regions_out for s in states),
        final_reduce_integral=last_reduce[0],
        final_reduce_error=last_reduce[1],
        iteration_log=None,
    )


# ---------------------------------------------------------------------------


def run_distributed(
    f: Integrand,
    domain: HyperRect,
    cfg: DriverConfig,
    rcfg: RedistributionConfig | None = None,
    workers: int = 1,
    backend: str = "deterministic_sim",
    collect_log: bool = False,
) -> DistributedResult:
    """Integrate with ``workers`` cooperating workers.

    The startup partition has ``workers * initial_subdomains_per_rank``
    subdomains dealt round-robin across ranks.  The reported result is
    recomputed once from fully settled stores (no in-flight work), so the
    integral and error are exact sums over every region's final estimate.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    rcfg = rcfg or RedistributionConfig()
    if backend == "deterministic_sim":
        return _run_simulation(f, domain, cfg, rcfg, workers, collect_log)
    if backend == "concurrent":
        return _run_concurrent(f, domain, cfg, rcfg, workers, collect_log)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
