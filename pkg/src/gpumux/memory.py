"""Four-tier memory hierarchy with block-level, exactly-one-copy accounting.

Blocks are the 2 MiB migration unit; chunks group up to 64 blocks of one
allocation.  A move is two-phase: begin_move reserves the destination and
commit_move releases the source, so nothing is overcommitted while a transfer
is in flight.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import (CapacityExceeded, ChunkBusy, InvariantViolation,
                     NotInFlight, UnknownApp, UnknownChunk)
from .units import BLOCK_SIZE, BLOCKS_PER_CHUNK, CHUNK_MAX, TierId, blocks_for

INF = float("inf")


@dataclass
class TierState:
    tier: TierId
    capacity: Optional[int]  # None means unbounded
    used: int = 0
    reserved: int = 0
    window_reserved: int = 0

    @property
    def free(self) -> float:
        """Ordinary free bytes (excludes the streaming window)."""
        if self.capacity is None:
            return INF
        return self.capacity - self.used - self.reserved - self.window_reserved

    def committed(self) -> int:
        return self.used + self.reserved + self.window_reserved


class Block:
    __slots__ = ("id", "chunk", "app", "size", "tier", "dst", "in_window", "to_window")

    def __init__(self, bid, chunk, app, size, tier):
        self.id = bid
        self.chunk = chunk
        self.app = app
        self.size = size          # payload bytes; footprint is always BLOCK_SIZE
        self.tier = tier          # resident tier, or source tier while in flight
        self.dst = None           # destination tier while in flight
        self.in_window = False    # resident inside the streaming window
        self.to_window = False    # in flight toward the streaming window

    @property
    def footprint(self) -> int:
        return BLOCK_SIZE

    @property
    def in_flight(self) -> bool:
        return self.dst is not None

    @property
    def location(self):
        if self.dst is None:
            return ("resident", self.tier)
        return ("in_flight", self.tier, self.dst)

    def __repr__(self):
        return f"Block({self.id}, chunk={self.chunk}, app={self.app!r}, loc={self.location})"


@dataclass(frozen=True)
class Chunk:
    id: int
    app: str
    requested_size: int
    blocks: tuple
    logical_base: int

    @property
    def footprint(self) -> int:
        return len(self.blocks) * BLOCK_SIZE


@dataclass
class StreamingWindow:
    tier: TierId
    size: int
    occupied: int = 0
    inflight: int = 0
    owners: frozenset = field(default_factory=frozenset)

    @property
    def free(self) -> int:
        return self.size - self.occupied - self.inflight


class MemState:
    def __init__(self, capacities: Dict[TierId, Optional[int]]):
        self.tiers = {t: TierState(t, capacities.get(t)) for t in TierId}
        self.blocks: Dict[int, Block] = {}
        self.chunks: Dict[int, Chunk] = {}
        self.app_chunks: Dict[str, List[int]] = {}
        # bytes of each app per tier, counting in-flight blocks at their source
        self.app_tier: Dict[str, List[int]] = {}
        self.chunk_gpu: Dict[int, int] = {}  # GPU-resident block count per chunk
        self.window: Optional[StreamingWindow] = None
        self.window_blocks = set()
        self.inflight_bytes = 0
        self.pinned_peak = 0
        self.padding = 0  # internal fragmentation
        self._next_block = 0
        self._next_chunk = 0
        self._next_base = 0x1000

    # ------------------------------------------------------------ apps/chunks
    def register_app(self, app: str) -> None:
        if app not in self.app_chunks:
            self.app_chunks[app] = []
            self.app_tier[app] = [0, 0, 0, 0]

    def _app(self, app):
        if app not in self.app_chunks:
            raise UnknownApp(app)
        return self.app_chunks[app]

    def allocate(self, app: str, size: int, initial_tier: TierId) -> List[int]:
        if size <= 0:
            raise ValueError("allocation size must be positive")
        self.register_app(app)
        tier = self.tiers[initial_tier]
        footprint = blocks_for(size) * BLOCK_SIZE
        if tier.free < footprint:
            raise CapacityExceeded(initial_tier, footprint, tier.free)
        out = []
        remaining = size
        while remaining > 0:
            part = min(remaining, CHUNK_MAX)
            remaining -= part
            nblk = blocks_for(part)
            cid = self._next_chunk
            self._next_chunk += 1
            bids = []
            left = part
            for _ in range(nblk):
                bid = self._next_block
                self._next_block += 1
                self.blocks[bid] = Block(bid, cid, app, min(left, BLOCK_SIZE), initial_tier)
                left -= BLOCK_SIZE
                bids.append(bid)
            self.chunks[cid] = Chunk(cid, app, part, tuple(bids), self._next_base)
            self._next_base += CHUNK_MAX
            self.app_chunks[app].append(cid)
            self.chunk_gpu[cid] = nblk if initial_tier == TierId.GPU else 0
            self.padding += nblk * BLOCK_SIZE - part
            out.append(cid)
        tier.used += footprint
        self.app_tier[app][initial_tier] += footprint
        self._peak()
        return out

    def free(self, app: str, chunk: int) -> int:
        c = self.chunks.get(chunk)
        if c is None or c.app != app:
            raise UnknownChunk(chunk)
        blocks = [self.blocks[b] for b in c.blocks]
        if any(b.in_flight for b in blocks):
            raise ChunkBusy(chunk)
        for b in blocks:
            self.tiers[b.tier].used -= BLOCK_SIZE
            self.app_tier[app][b.tier] -= BLOCK_SIZE
            if b.in_window:
                self._window_release(b)
            del self.blocks[b.id]
        del self.chunks[chunk]
        del self.chunk_gpu[chunk]
        self.app_chunks[app].remove(chunk)
        self.padding -= c.footprint - c.requested_size
        return c.footprint

    # ------------------------------------------------------------ moves
    def can_begin(self, dst: TierId, use_window=False) -> bool:
        if use_window:
            return self.window is not None and self.window.tier == dst and self.window.free >= BLOCK_SIZE
        return self.tiers[dst].free >= BLOCK_SIZE

    def begin_move(self, bid: int, dst: TierId, use_window=False) -> None:
        b = self.blocks[bid]
        if b.in_flight:
            raise InvariantViolation(f"block {bid} already in flight")
        if abs(int(b.tier) - int(dst)) != 1:
            raise InvariantViolation(f"block {bid}: {b.tier.label}->{dst.label} is not an adjacent hop")
        t = self.tiers[dst]
        if use_window:
            w = self.window
            if w is None or w.tier != dst or w.free < BLOCK_SIZE:
                raise CapacityExceeded(dst, BLOCK_SIZE, 0 if w is None else w.free)
            w.inflight += BLOCK_SIZE
            t.window_reserved -= BLOCK_SIZE
            b.to_window = True
        elif t.free < BLOCK_SIZE:
            raise CapacityExceeded(dst, BLOCK_SIZE, t.free)
        t.reserved += BLOCK_SIZE
        b.dst = dst
        self.inflight_bytes += BLOCK_SIZE

    def commit_move(self, bid: int, dst: TierId) -> None:
        b = self.blocks.get(bid)
        if b is None:
            raise UnknownChunk(f"block {bid}")
        if b.dst is None or b.dst != dst:
            raise NotInFlight(bid)
        src = self.tiers[b.tier]
        t = self.tiers[dst]
        src.used -= BLOCK_SIZE
        if b.in_window:
            self._window_release(b)
        t.reserved -= BLOCK_SIZE
        t.used += BLOCK_SIZE
        if b.to_window:
            self.window.inflight -= BLOCK_SIZE
            self.window.occupied += BLOCK_SIZE
            b.in_window = True
            b.to_window = False
            self.window_blocks.add(bid)
        apt = self.app_tier[b.app]
        apt[b.tier] -= BLOCK_SIZE
        apt[dst] += BLOCK_SIZE
        if b.tier == TierId.GPU:
            self.chunk_gpu[b.chunk] -= 1
        elif dst == TierId.GPU:
            self.chunk_gpu[b.chunk] += 1
        b.tier = dst
        b.dst = None
        self.inflight_bytes -= BLOCK_SIZE
        self._peak()

    def _window_release(self, b: Block) -> None:
        b.in_window = False
        self.window_blocks.discard(b.id)
        self.window.occupied -= BLOCK_SIZE
        self.tiers[self.window.tier].window_reserved += BLOCK_SIZE

    def _peak(self):
        p = self.tiers[TierId.PINNED].committed()
        if p > self.pinned_peak:
            self.pinned_peak = p

    # ------------------------------------------------------------ window
    def reserve_streaming_window(self, tier: TierId, size: int, owner=None) -> StreamingWindow:
        if self.window is not None:
            raise InvariantViolation("streaming window already reserved")
        t = self.tiers[tier]
        if t.free < size:
            raise CapacityExceeded(tier, size, t.free)
        t.window_reserved += size
        owners = frozenset() if owner is None else frozenset([owner] if isinstance(owner, str) else owner)
        self.window = StreamingWindow(tier, size, owners=owners)
        self._peak()
        return self.window

    def release_streaming_window(self) -> None:
        w = self.window
        if w is None:
            return
        self.reclassify_window()
        if w.occupied or w.inflight:
            raise InvariantViolation("window still holds blocks")
        self.tiers[w.tier].window_reserved -= w.size
        self.window = None

    def reclassify_window(self) -> int:
        """Move window-resident blocks into ordinary space where room allows.

        Returns the number of bytes still occupying the window.
        """
        w = self.window
        if w is None or w.occupied == 0:
            return 0
        t = self.tiers[w.tier]
        for bid in sorted(self.window_blocks):
            b = self.blocks[bid]
            if b.in_flight:
                continue
            if t.free < BLOCK_SIZE:
                break
            self._window_release(b)
        return w.occupied

    # ------------------------------------------------------------ queries
    def pinned_usage(self):
        per_app = {a: v[TierId.PINNED] for a, v in self.app_tier.items() if v[TierId.PINNED]}
        return self.tiers[TierId.PINNED].used, per_app

    def app_footprint(self, app: str) -> int:
        self._app(app)
        return sum(self.app_tier[app])

    def app_bytes(self, app: str, tier: TierId) -> int:
        return self.app_tier[app][tier]

    def app_blocks(self, app: str):
        for cid in self._app(app):
            for bid in self.chunks[cid].blocks:
                yield self.blocks[bid]

    def chunk_location(self, chunk: int) -> Counter:
        c = self.chunks.get(chunk)
        if c is None:
            raise UnknownChunk(chunk)
        return Counter(self.blocks[b].tier for b in c.blocks)

    def chunk_on_gpu(self, chunk: int) -> bool:
        c = self.chunks[chunk]
        return self.chunk_gpu[chunk] == len(c.blocks)

    def total_used(self) -> int:
        return sum(t.used for t in self.tiers.values())

    def check_invariants(self) -> None:
        used = Counter()
        reserved = Counter()
        per_app = {a: [0, 0, 0, 0] for a in self.app_tier}
        wocc = winf = 0
        seen = set()
        for cid, c in self.chunks.items():
            if len(c.blocks) > BLOCKS_PER_CHUNK or len(c.blocks) != blocks_for(c.requested_size):
                raise InvariantViolation(f"chunk {cid} has {len(c.blocks)} blocks")
            ng = 0
            for bid in c.blocks:
                if bid in seen:
                    raise InvariantViolation(f"block {bid} listed twice")
                seen.add(bid)
                b = self.blocks[bid]
                used[b.tier] += BLOCK_SIZE
                per_app[b.app][b.tier] += BLOCK_SIZE
                if b.dst is not None:
                    reserved[b.dst] += BLOCK_SIZE
                    if b.to_window:
                        winf += BLOCK_SIZE
                if b.in_window:
                    wocc += BLOCK_SIZE
                if b.tier == TierId.GPU:
                    ng += 1
            if ng != self.chunk_gpu[cid]:
                raise InvariantViolation(f"chunk {cid} GPU count mismatch")
        if len(seen) != len(self.blocks):
            raise InvariantViolation("orphan blocks")
        for t, ts in self.tiers.items():
            if ts.used != used[t] or ts.reserved != reserved[t]:
                raise InvariantViolation(f"{t.label}: accounting mismatch")
            if ts.capacity is not None and ts.committed() > ts.capacity:
                raise InvariantViolation(f"{t.label}: capacity exceeded")
            if ts.window_reserved < 0:
                raise InvariantViolation(f"{t.label}: negative window reservation")
        if per_app != self.app_tier:
            raise InvariantViolation("per-app tier counters mismatch")
        w = self.window
        if w is not None:
            if w.occupied != wocc or w.inflight != winf or w.occupied + w.inflight > w.size:
                raise InvariantViolation("streaming window accounting mismatch")
            if self.tiers[w.tier].window_reserved != w.size - wocc - winf:
                raise InvariantViolation("window reservation mismatch")
