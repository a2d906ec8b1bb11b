"""Demand-paging baseline: fault-driven migration with LRU-on-fault eviction.

Every managed page keeps a pinned host mirror, so the host-side footprint is
the whole managed allocation.  A fault evicts the coldest pages (by last-fault
stamp) until the fetch batch fits, then fetches the faulting page plus up to
`prefetch_pages` neighbours of the same chunk.  Eviction and fetch share one
half-duplex channel, so they never overlap.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional

from .errors import CapacityExceeded, UnknownApp, UnknownChunk
from .units import BLOCK_SIZE, CHUNK_MAX, GiB, blocks_for

PAGE_SIZE = BLOCK_SIZE


@dataclass(frozen=True)
class UvmConfig:
    fault_latency: float = 30e-6
    prefetch_pages: int = 15
    bandwidth: float = 64 * GiB     # one shared direction at a time

    def __post_init__(self):
        if self.prefetch_pages < 0 or self.fault_latency < 0 or self.bandwidth <= 0:
            raise ValueError("invalid demand-paging configuration")


@dataclass(frozen=True)
class FaultResolution:
    evicted: tuple
    fetched: tuple
    service_time: float
    evict_interval: tuple = (0.0, 0.0)
    fetch_interval: tuple = (0.0, 0.0)


class UvmMemory:
    def __init__(self, gpu_capacity: int, cfg: UvmConfig = UvmConfig(),
                 transfer_log=None, fault_log=None):
        self.cfg = cfg
        self.capacity_pages = gpu_capacity // PAGE_SIZE
        self.page_app: List[str] = []
        self.page_chunk: List[int] = []
        self.resident = bytearray()
        self.stamp: List[float] = []
        self.lru: "OrderedDict[int, None]" = OrderedDict()   # resident pages, coldest first
        self.chunks: Dict[int, tuple] = {}                    # chunk -> (app, first page, npages)
        self.app_chunks: Dict[str, List[int]] = {}
        self.chunk_resident: Dict[int, int] = {}
        self.resident_count = 0
        self.managed_bytes = 0
        self.mirror_peak = 0
        self.transfer_log = transfer_log
        self.fault_log = fault_log
        self.faults = 0
        self._next_chunk = 0
        self._last_stamp = float("-inf")

    def register(self, app: str) -> None:
        self.app_chunks.setdefault(app, [])

    def allocate(self, app: str, size: int) -> List[int]:
        self.register(app)
        out = []
        remaining = size
        while remaining > 0:
            part = min(remaining, CHUNK_MAX)
            remaining -= part
            n = blocks_for(part)
            cid = self._next_chunk
            self._next_chunk += 1
            first = len(self.page_app)
            self.page_app.extend([app] * n)
            self.page_chunk.extend([cid] * n)
            self.resident.extend(b"\0" * n)
            self.stamp.extend([0.0] * n)
            self.chunks[cid] = (app, first, n)
            self.chunk_resident[cid] = 0
            self.app_chunks[app].append(cid)
            self.managed_bytes += n * PAGE_SIZE
            out.append(cid)
        self.mirror_peak = max(self.mirror_peak, self.managed_bytes)
        return out

    def free(self, app: str, chunk: int) -> int:
        info = self.chunks.get(chunk)
        if info is None or info[0] != app:
            raise UnknownChunk(chunk)
        _, first, n = info
        for p in range(first, first + n):
            if self.resident[p]:
                self.resident[p] = 0
                self.resident_count -= 1
                del self.lru[p]
        del self.chunks[chunk]
        del self.chunk_resident[chunk]
        self.app_chunks[app].remove(chunk)
        self.managed_bytes -= n * PAGE_SIZE
        return n * PAGE_SIZE

    def pinned_mirror_usage(self) -> int:
        return self.managed_bytes

    def gpu_resident_bytes(self, app: Optional[str] = None) -> int:
        if app is None:
            return self.resident_count * PAGE_SIZE
        return sum(self.chunk_resident[c] for c in self.app_chunks[app]) * PAGE_SIZE

    def chunk_pages(self, chunk: int) -> range:
        _, first, n = self.chunks[chunk]
        return range(first, first + n)

    # ------------------------------------------------------------ faults
    def _victims(self, protected):
        for p in list(self.lru):
            if self.page_chunk[p] not in protected:
                yield p

    def on_fault(self, app: str, page: int, now: float, protected=frozenset(),
                 victims=None) -> FaultResolution:
        if app not in self.app_chunks:
            raise UnknownApp(app)
        if self.resident[page]:
            raise ValueError(f"page {page} is already resident")
        cid = self.page_chunk[page]
        _, first, n = self.chunks[cid]
        batch = [page]
        k = self.cfg.prefetch_pages
        p = page + 1
        while len(batch) <= k and p < first + n:
            if not self.resident[p]:
                batch.append(p)
            p += 1
        p = page - 1
        while len(batch) <= k and p >= first:
            if not self.resident[p]:
                batch.append(p)
            p -= 1
        need = len(batch)
        free = self.capacity_pages - self.resident_count
        evicted = []
        if need > free:
            if victims is None:
                victims = self._victims(protected)
            for v in victims:
                if not self.resident[v]:
                    continue
                evicted.append(v)
                if len(evicted) == need - free:
                    break
            if len(evicted) < need - free:
                raise CapacityExceeded("gpu", need * PAGE_SIZE, free * PAGE_SIZE)
        for v in evicted:
            self.resident[v] = 0
            self.resident_count -= 1
            self.chunk_resident[self.page_chunk[v]] -= 1
            del self.lru[v]
        if now < self._last_stamp:
            raise ValueError("faults must be raised in time order")
        self._last_stamp = now
        for q in batch:
            self.resident[q] = 1
            self.resident_count += 1
            self.chunk_resident[cid] += 1
            self.stamp[q] = now
            self.lru[q] = None
        bw = self.cfg.bandwidth
        lat = self.cfg.fault_latency
        t_ev = len(evicted) * PAGE_SIZE / bw
        t_f = need * PAGE_SIZE / bw
        ev_iv = (now + lat, now + lat + t_ev)
        f_iv = (ev_iv[1], ev_iv[1] + t_f)
        service = lat + t_ev + t_f
        self.faults += 1
        if self.transfer_log is not None:
            if evicted:
                self.transfer_log.add(ev_iv[0], ev_iv[1], evicted[0], 0, 1, len(evicted) * PAGE_SIZE)
            self.transfer_log.add(f_iv[0], f_iv[1], page, 1, 0, need * PAGE_SIZE)
        if self.fault_log is not None:
            self.fault_log.append((now, app, page, len(evicted) * PAGE_SIZE, need * PAGE_SIZE, service))
        return FaultResolution(tuple(evicted), tuple(batch), service, ev_iv, f_iv)

    def touch_kernel(self, app: str, chunks, base_duration: float, now: float) -> float:
        """Effective kernel duration after servicing every fault it raises.

        Pages of the chunks the kernel touches are never chosen as victims
        while it runs.
        """
        if app not in self.app_chunks:
            raise UnknownApp(app)
        chunks = list(chunks)
        for c in chunks:
            info = self.chunks.get(c)
            if info is None or info[0] != app:
                raise UnknownChunk(c)
        protected = frozenset(chunks)
        t = now
        victims = None
        for c in chunks:
            _, first, n = self.chunks[c]
            if self.chunk_resident[c] == n:
                continue
            for p in range(first, first + n):
                if self.resident[p]:
                    continue
                if victims is None and self.capacity_pages - self.resident_count <= self.cfg.prefetch_pages:
                    victims = self._victims(protected)
                res = self.on_fault(app, p, t, protected, victims)
                t += res.service_time
        return base_duration + (t - now)
