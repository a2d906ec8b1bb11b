"""Executes migration plans over the inter-tier links.

Each link direction is a serial resource carrying one 2 MiB block at a time.
A full-duplex link has an independent resource per direction; a half-duplex
link shares one resource between both directions.  The orchestrator is a
state machine: the caller feeds it simulated time via advance() and it reports
jobs that completed.
"""
from __future__ import annotations

import bisect
import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import Deadlock, InvariantViolation
from .memory import MemState
from .planner import MigrationPlan, MoveKind
from .units import BLOCK_SIZE, GiB, TierId

GPU, PINNED, PAGED, DISK = TierId.GPU, TierId.PINNED, TierId.PAGED, TierId.DISK

DEFAULT_OVERHEAD = 5e-6
_TIERS = tuple(TierId)

# dispatch priority: fetch, promotions, demotions, eviction
DIRECTIONS = ((1, 0), (2, 1), (3, 2), (1, 2), (2, 3), (0, 1))


class Duplex(Enum):
    FULL = "full"
    HALF = "half"


@dataclass(frozen=True)
class Link:
    upper: TierId
    bandwidth_up: float     # toward the shallower tier
    bandwidth_down: float
    duplex: Duplex = Duplex.FULL

    @property
    def endpoints(self):
        return (self.upper, TierId(self.upper + 1))


def default_links(gpu_bw=64 * GiB, host_bw=32 * GiB, disk_bw=4 * GiB,
                  gpu_duplex=Duplex.FULL) -> Dict[TierId, Link]:
    return {
        GPU: Link(GPU, gpu_bw, gpu_bw, gpu_duplex),
        PINNED: Link(PINNED, host_bw, host_bw),
        PAGED: Link(PAGED, disk_bw, disk_bw),
    }


class TransferLog:
    """Append-only record of block transfers: (start, end, block, src, dst, bytes)."""

    def __init__(self):
        self.records: List[tuple] = []

    def add(self, start, end, block, src, dst, nbytes):
        self.records.append((start, end, block, int(src), int(dst), nbytes))

    def throughput(self, t0: float, t1: float):
        return aggregate_throughput(self.records, (t0, t1))

    def csv_rows(self):
        for start, end, block, src, dst, nbytes in self.records:
            yield (start, block, TierId(src).label, TierId(dst).label,
                   "up" if dst < src else "down", nbytes)


def _overlap_bytes(records, windows):
    """Bytes to and from the GPU carried inside the given (disjoint) time windows."""
    windows = sorted(windows)
    starts = [w[0] for w in windows]
    to_gpu = from_gpu = 0.0
    for start, end, _, src, dst, nbytes in records:
        if src != 0 and dst != 0:
            continue
        dur = end - start
        i = max(0, bisect.bisect_right(starts, start) - 1)
        while i < len(windows):
            t0, t1 = windows[i]
            i += 1
            if t0 >= end:
                break
            lo, hi = max(start, t0), min(end, t1)
            if hi <= lo:
                continue
            part = nbytes if dur <= 0 else nbytes * (hi - lo) / dur
            if dst == 0:
                to_gpu += part
            else:
                from_gpu += part
    return to_gpu, from_gpu


def aggregate_throughput(records, window: Tuple[float, float]):
    """(to_gpu, from_gpu, bidirectional) bytes/s over a time window."""
    t0, t1 = window
    if t1 <= t0:
        return (0.0, 0.0, 0.0)
    to_gpu, from_gpu = _overlap_bytes(records, [(t0, t1)])
    span = t1 - t0
    return (to_gpu / span, from_gpu / span, (to_gpu + from_gpu) / span)


def windows_throughput(records, windows):
    """Aggregate bytes/s over a union of disjoint windows."""
    windows = [(a, b) for a, b in windows if b > a]
    span = sum(b - a for a, b in windows)
    if span <= 0:
        return (0.0, 0.0, 0.0)
    to_gpu, from_gpu = _overlap_bytes(records, windows)
    return (to_gpu / span, from_gpu / span, (to_gpu + from_gpu) / span)


class _Channel:
    __slots__ = ("name", "busy", "last_finish", "busy_time")

    def __init__(self, name):
        self.name = name
        self.busy = False
        self.last_finish = None
        self.busy_time = 0.0


@dataclass
class Job:
    plan: MigrationPlan
    kind: str                        # "switch" or "prefetch"
    start: float
    evict_hold: float = 0.0
    remaining: int = 0
    inflight: int = 0
    active: bool = False
    cancelled: bool = False
    done_at: Optional[float] = None
    first_leg: Optional[float] = None
    bytes_moved: int = 0
    tag: object = None
    phase: int = 0

    @property
    def done(self):
        return self.done_at is not None


class Orchestrator:
    def __init__(self, mem: MemState, links: Dict[TierId, Link],
                 dispatch_overhead: float = DEFAULT_OVERHEAD, log: Optional[TransferLog] = None):
        self.mem = mem
        self.links = links
        self.overhead = dispatch_overhead
        self.log = log if log is not None else TransferLog()
        self.chan: Dict[tuple, _Channel] = {}
        self.bw: Dict[tuple, float] = {}
        for upper, link in links.items():
            up = (upper + 1, upper)
            down = (upper, upper + 1)
            self.bw[up] = link.bandwidth_up
            self.bw[down] = link.bandwidth_down
            if link.duplex == Duplex.HALF:
                ch = _Channel(f"{TierId(upper).label}<->{TierId(upper + 1).label}")
                self.chan[up] = self.chan[down] = ch
            else:
                self.chan[up] = _Channel(f"{TierId(upper + 1).label}->{TierId(upper).label}")
                self.chan[down] = _Channel(f"{TierId(upper).label}->{TierId(upper + 1).label}")
        self.queues: Dict[tuple, deque] = {d: deque() for d in DIRECTIONS}
        self.win_queue: deque = deque()      # window-resident blocks waiting at pinned
        self.route: Dict[int, tuple] = {}    # block -> (final tier, job)
        self.jobs: List[Job] = []
        self.heap: list = []
        self._seq = 0
        self.now = 0.0
        self._wakes = set()

    # ------------------------------------------------------------ interface
    def submit(self, plan: MigrationPlan, now: float, kind: str = "switch",
               evict_hold: float = 0.0, tag=None) -> Job:
        job = Job(plan, kind, now, evict_hold=evict_hold, tag=tag)
        self.jobs.append(job)
        if plan.empty:
            job.done_at = now
            job.active = True
            return job
        if now > self.now:
            self._push(now, "activate", job)
        else:
            self._activate(job)
            self._dispatch(self.now)
        return job

    def next_event_time(self) -> Optional[float]:
        return self.heap[0][0] if self.heap else None

    @property
    def idle(self) -> bool:
        return not self.heap

    def advance(self, until: float, stop_on_finish: bool = False) -> List[Job]:
        """Process all events with time <= until; return jobs finished meanwhile.

        With stop_on_finish the call returns right after the first event that
        finishes a job, leaving `now` at that event's time.
        """
        finished = []
        heap = self.heap
        while heap and heap[0][0] <= until:
            if stop_on_finish and finished:
                return finished
            t, _, kind, payload = heapq.heappop(heap)
            self.now = t
            if kind == "done":
                job = self._complete(t, *payload)
                if job is not None:
                    finished.append(job)
            elif kind == "activate":
                self._activate(payload)
            else:
                self._wakes.discard(t)
            self._dispatch(t)
            finished.extend(self._check_stall(t))
        if stop_on_finish and finished:
            return finished
        if until > self.now and until != float("inf"):
            self.now = until
        return finished

    def cancel(self, job: Job) -> None:
        """Drop legs that have not started; blocks stay where they are."""
        job.cancelled = True
        for d, q in self.queues.items():
            self.queues[d] = deque(b for b in q if self.route.get(b, (None, None))[1] is not job)
        self.win_queue = deque(b for b in self.win_queue if self.route.get(b, (None, None))[1] is not job)
        for bid in [b for b, (_, j) in self.route.items() if j is job and not self.mem.blocks[b].in_flight]:
            del self.route[bid]
        if job.inflight == 0 and not job.done:
            job.done_at = self.now
            if job.active:
                self._finish_window(job)

    def channel_busy_time(self) -> Dict[str, float]:
        seen = {}
        for ch in self.chan.values():
            seen[ch.name] = ch.busy_time
        return dict(sorted(seen.items()))

    # ------------------------------------------------------------ internals
    def _push(self, t, kind, payload):
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, payload))

    def _wake(self, t):
        if t not in self._wakes:
            self._wakes.add(t)
            self._push(t, "wake", None)

    def _activate(self, job: Job):
        job.active = True
        if job.kind == "switch" and self.mem.window is not None:
            self.mem.window.owners = frozenset(job.plan.evicting_apps)
        job.phase = 0
        self._release(job, self._phases(job)[0])

    @staticmethod
    def _phases(job):
        return [st for st in job.plan.stages] + ([job.plan.moves] if job.plan.moves else [])

    def _release(self, job: Job, moves):
        mem = self.mem
        job.remaining = len(moves)
        for m in moves:
            b = mem.blocks[m.block]
            if b.tier != m.src or b.in_flight:
                raise InvariantViolation(f"plan is stale for block {m.block}")
            self.route[m.block] = (m.dst, job)
            self._enqueue(m.block, m.src, m.dst)

    def _enqueue(self, bid, at, final):
        nxt = at - 1 if final < at else at + 1
        if at == PINNED and nxt == PAGED and self.mem.blocks[bid].in_window:
            self.win_queue.append(bid)
        else:
            self.queues[(at, nxt)].append(bid)

    def _head(self, d, now):
        q = self.win_queue if d == (1, 2) and self.win_queue else self.queues[d]
        while q:
            bid = q[0]
            r = self.route.get(bid)
            if r is None or r[1].cancelled:
                q.popleft()
                continue
            return q, bid, r[1]
        if d == (1, 2) and q is self.win_queue:
            return self._head_plain(d)
        return None

    def _head_plain(self, d):
        q = self.queues[d]
        while q:
            bid = q[0]
            r = self.route.get(bid)
            if r is None or r[1].cancelled:
                q.popleft()
                continue
            return q, bid, r[1]
        return None

    def _dispatch(self, now):
        mem = self.mem
        queues = self.queues
        for d in DIRECTIONS:
            if not queues[d] and (d != (1, 2) or not self.win_queue):
                continue
            ch = self.chan.get(d)
            if ch is None or ch.busy:
                continue
            h = self._head(d, now)
            if h is None:
                continue
            q, bid, job = h
            src, dst = d
            use_window = False
            if d == (0, 1):
                if job.evict_hold > now:
                    self._wake(job.evict_hold)
                    continue
                w = mem.window
                b = mem.blocks[bid]
                if (w is not None and w.free >= BLOCK_SIZE and job.kind == "switch"
                        and (not w.owners or b.app in w.owners)):
                    use_window = True
                elif mem.tiers[dst].free < BLOCK_SIZE:
                    continue
            elif mem.tiers[dst].free < BLOCK_SIZE:
                continue
            q.popleft()
            mem.begin_move(bid, _TIERS[dst], use_window)
            xfer = BLOCK_SIZE / self.bw[d]
            dur = max(xfer, self.overhead) if ch.last_finish == now else self.overhead + xfer
            ch.busy = True
            ch.busy_time += dur
            job.inflight += 1
            if job.first_leg is None:
                job.first_leg = now
            self._push(now + dur, "done", (ch, bid, src, dst, now))

    def _complete(self, t, ch, bid, src, dst, started):
        ch.busy = False
        ch.last_finish = t
        self.mem.commit_move(bid, _TIERS[dst])
        self.log.add(started, t, bid, src, dst, BLOCK_SIZE)
        final, job = self.route[bid]
        job.inflight -= 1
        job.bytes_moved += BLOCK_SIZE
        if job.cancelled:
            del self.route[bid]
            if job.inflight == 0 and not job.done:
                job.done_at = t
                self._finish_window(job)
                return job
            return None
        if dst == final:
            del self.route[bid]
            job.remaining -= 1
            if job.remaining == 0:
                phases = self._phases(job)
                if job.phase + 1 < len(phases):
                    job.phase += 1
                    self._release(job, phases[job.phase])
            if job.remaining == 0:
                job.done_at = t
                self._finish_window(job)
                return job
            return None
        self._enqueue(bid, dst, final)
        return None

    def _finish_window(self, job):
        if job.kind == "switch" and self.mem.window is not None:
            self.mem.reclassify_window()
            self.mem.window.owners = frozenset()

    def _check_stall(self, t):
        if self.heap or any(ch.busy for ch in self.chan.values()):
            return []
        out = []
        for job in self.jobs:
            if job.done or not job.active:
                continue
            if job.kind == "prefetch":
                self.cancel(job)
                out.append(job)
            else:
                raise Deadlock(f"plan for {job.plan.incoming_app} stalled with "
                               f"{job.remaining} moves left at t={t}")
        self.jobs = [j for j in self.jobs if not j.done]
        return out


def execute(plan: MigrationPlan, state: MemState, links: Optional[Dict[TierId, Link]] = None,
            clock: float = 0.0, dispatch_overhead: float = DEFAULT_OVERHEAD,
            log: Optional[TransferLog] = None):
    """Run one plan to completion; returns (completion_time, transfer records)."""
    if links is None:
        links = default_links()
    log = log if log is not None else TransferLog()
    orch = Orchestrator(state, links, dispatch_overhead, log)
    orch.now = clock
    job = orch.submit(plan, clock)
    while not job.done:
        if orch.next_event_time() is None:
            raise Deadlock("plan stalled")
        orch.advance(orch.next_event_time())
    return job.done_at, list(log.records)
