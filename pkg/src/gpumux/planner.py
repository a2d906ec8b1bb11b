"""Global migration planning for context switches and prefetch.

A switch plan brings every block of the incoming app onto the GPU, evicts only
as many resident blocks as needed, and decides top-down how many evicted
blocks each lower tier can keep.  Feasibility of the resulting plan is decided
by a sequential dry run that follows the same priority order the orchestrator
uses (fetch, promote, demote, evict).
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import (AppTooLarge, InfeasiblePlan, InsufficientEvictable,
                     InvariantViolation)
from .memory import MemState
from .units import BLOCK_SIZE, MiB, TierId

GPU, PINNED, PAGED, DISK = TierId.GPU, TierId.PINNED, TierId.PAGED, TierId.DISK


class MoveKind(IntEnum):
    # value order is the tie-break order inside one tier distance
    FETCH = 0
    EVICT = 1
    DEMOTE = 2
    PREFETCH = 3
    LIFT = 4

    @property
    def label(self):
        return {0: "fetch", 1: "evict", 2: "demote", 3: "prefetch", 4: "lift"}[int(self)]


@dataclass(frozen=True)
class Move:
    block: int
    src: TierId
    dst: TierId
    tier_distance: int
    kind: MoveKind

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("move with src == dst")

    def sort_key(self):
        return (-self.tier_distance, int(self.kind), self.block)


@dataclass(frozen=True)
class MigrationPlan:
    moves: tuple
    incoming_app: str
    bytes_in: int
    bytes_out: int
    evicting_apps: tuple = ()
    # single-move stages executed one after another before `moves`; only
    # produced by the exhaustive fallback for jammed hierarchies
    stages: tuple = ()

    def __len__(self):
        return len(self.moves) + sum(len(s) for s in self.stages)

    @property
    def empty(self) -> bool:
        return not self.moves and not self.stages

    def all_moves(self):
        for st in self.stages:
            yield from st
        yield from self.moves


@dataclass(frozen=True)
class PlannerConfig:
    streaming_window: int = 512 * MiB
    eviction_policy: str = "lrs-largest-first"
    pinned_budget: Optional[int] = None

    def __post_init__(self):
        if self.streaming_window < BLOCK_SIZE:
            raise ValueError("streaming window must hold at least one block")
        if self.eviction_policy != "lrs-largest-first":
            raise ValueError(f"unknown eviction policy {self.eviction_policy!r}")


def _move(bid, src, dst, kind):
    return Move(bid, TierId(src), TierId(dst), abs(int(src) - int(dst)), kind)


def _sorted(moves):
    return tuple(sorted(moves, key=Move.sort_key))


def dump_plan(plan: MigrationPlan) -> str:
    return "".join(f"{m.block} {m.src.label} {m.dst.label} {m.tier_distance} {m.kind.label}\n"
                   for m in plan.all_moves())


# ---------------------------------------------------------------- evictions

def _victim_apps(state: MemState, sched_hint: Sequence[str], exclude) -> List[str]:
    order = [a for a in sched_hint if a in state.app_chunks and a != exclude]
    seen = set(order)
    order += sorted(a for a in state.app_chunks if a not in seen and a != exclude)
    # drop duplicates while keeping first occurrence
    out, seen = [], set()
    for a in order:
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


def _victim_chunks(state: MemState, app: str) -> List[int]:
    cands = [(state.chunk_gpu[c], c) for c in state.app_chunks[app] if state.chunk_gpu[c] > 0]
    cands.sort(key=lambda x: (-x[0], x[1]))
    return [c for _, c in cands]


def select_evictions(bytes_needed: int, state: MemState, sched_hint: Sequence[str] = (),
                     exclude: Optional[str] = None) -> List[int]:
    """Chunks to evict, least recently scheduled app first, largest chunk first."""
    if bytes_needed <= 0:
        return []
    out, got = [], 0
    for app in _victim_apps(state, sched_hint, exclude):
        for cid in _victim_chunks(state, app):
            out.append(cid)
            got += state.chunk_gpu[cid] * BLOCK_SIZE
            if got >= bytes_needed:
                return out
    raise InsufficientEvictable(f"need {bytes_needed} bytes, only {got} evictable")


def _victim_blocks(state: MemState, tier: TierId, sched_hint, exclude) -> Iterable[int]:
    """Blocks of non-incoming apps resident in `tier`, in victim order."""
    for app in _victim_apps(state, sched_hint, exclude):
        if not state.app_tier[app][tier]:
            continue
        per_chunk = []
        for cid in state.app_chunks[app]:
            bl = [b for b in state.chunks[cid].blocks if state.blocks[b].tier == tier]
            if bl:
                per_chunk.append((-len(bl), cid, bl))
        per_chunk.sort(key=lambda x: (x[0], x[1]))
        for _, _, bl in per_chunk:
            yield from bl


# ---------------------------------------------------------------- dry run

def _cap_blocks(state: MemState):
    return [None if t.capacity is None else t.capacity // BLOCK_SIZE
            for t in (state.tiers[x] for x in TierId)]


def dry_run(moves: Sequence[Move], occ: Sequence[int], caps: Sequence[Optional[int]],
            window: int) -> bool:
    """Sequentially execute `moves` at block-count level; True if all complete.

    occ[t] is the resident block count per tier before the plan (window empty),
    caps[t] the capacity in blocks (None = unbounded), window the streaming
    window size in blocks on the pinned tier.
    """
    inf = float("inf")
    cap = [inf if c is None else c for c in caps]
    cap1 = cap[1] - window
    occ = list(occ)
    wocc = 0
    up = [0, 0, 0, 0]                       # incoming blocks waiting at tier t
    down = {1: [{}, {}], 2: [{}, {}]}       # tier -> [ordinary, window] -> {dest: n}
    ev = {}                                 # evictions waiting on GPU by dest
    for m in moves:
        if m.dst < m.src:
            up[m.src] += 1
        elif m.src == GPU:
            ev[m.dst] = ev.get(m.dst, 0) + 1
        else:
            d = down[m.src][0]
            d[m.dst] = d.get(m.dst, 0) + 1
    remaining = len(moves)

    def take(d):
        k = max(d)
        d[k] -= 1
        if not d[k]:
            del d[k]
        return k

    while remaining:
        if up[1] and occ[0] < cap[0]:
            up[1] -= 1; occ[1] -= 1; occ[0] += 1; remaining -= 1
            continue
        if up[2] and occ[1] < cap1:
            up[2] -= 1; occ[2] -= 1; occ[1] += 1; up[1] += 1
            continue
        if up[3] and occ[2] < cap[2]:
            up[3] -= 1; occ[3] -= 1; occ[2] += 1; up[2] += 1
            continue
        if (down[1][1] or down[1][0]) and occ[2] < cap[2]:
            if down[1][1]:
                dest = take(down[1][1]); wocc -= 1
            else:
                dest = take(down[1][0]); occ[1] -= 1
            occ[2] += 1
            if dest == 2:
                remaining -= 1
            else:
                down[2][0][dest] = down[2][0].get(dest, 0) + 1
            continue
        if down[2][0] and occ[3] < cap[3]:
            take(down[2][0]); occ[2] -= 1; occ[3] += 1; remaining -= 1
            continue
        if ev:
            if wocc < window:
                into_window = True
            elif occ[1] < cap1:
                into_window = False
            else:
                return False
            dest = take(ev)
            occ[0] -= 1
            if into_window:
                wocc += 1
            else:
                occ[1] += 1
            if dest == 1:
                remaining -= 1
            else:
                d = down[1][1 if into_window else 0]
                d[dest] = d.get(dest, 0) + 1
            continue
        return False
    # window-resident blocks must fit back into ordinary space
    return occ[1] + wocc <= cap1


def _snapshot_counts(state: MemState):
    return [state.tiers[t].used // BLOCK_SIZE for t in TierId]


# ---------------------------------------------------------------- planning

def plan_switch(incoming: str, state: MemState, cfg: PlannerConfig = PlannerConfig(),
                sched_hint: Sequence[str] = ()) -> MigrationPlan:
    footprint = state.app_footprint(incoming)
    gpu_cap = state.tiers[GPU].capacity
    if gpu_cap is not None and footprint > gpu_cap:
        raise AppTooLarge(f"{incoming}: footprint {footprint} > GPU capacity {gpu_cap}")
    if state.inflight_bytes:
        raise InvariantViolation("plan_switch needs a snapshot with no transfers in flight")
    plan = _plan_monotone(incoming, state, sched_hint)
    if plan is None:
        plan = _plan_search(incoming, state, sched_hint)
    if plan is None:
        raise InfeasiblePlan(f"no capacity-feasible plan brings {incoming} onto the GPU")
    return plan


def _plan_monotone(incoming, state, sched_hint) -> Optional[MigrationPlan]:
    """Plan where incoming blocks only move up and all others only move down."""
    inc = sorted((b for b in state.app_blocks(incoming) if b.tier != GPU), key=lambda b: b.id)
    if not inc:
        return MigrationPlan((), incoming, 0, 0)
    gpu_free = int(state.tiers[GPU].free // BLOCK_SIZE)
    need = max(0, len(inc) - gpu_free)

    evicted: List[int] = []
    if need:
        for cid in select_evictions(need * BLOCK_SIZE, state, sched_hint, incoming):
            for bid in state.chunks[cid].blocks:
                if state.blocks[bid].tier == GPU:
                    evicted.append(bid)
                    if len(evicted) == need:
                        break
            if len(evicted) == need:
                break

    caps = _cap_blocks(state)
    window = state.window.size // BLOCK_SIZE if state.window is not None else 0
    occ = _snapshot_counts(state)
    inc_at = [0, 0, 0, 0]
    for b in inc:
        inc_at[b.tier] += 1
    stay = [occ[t] - inc_at[t] for t in TierId]

    fetches = [_move(b.id, b.tier, GPU, MoveKind.FETCH) for b in inc]
    for reserve in (1, 0):
        moves = _retain(state, caps, window, stay, inc_at, evicted, reserve, sched_hint, incoming)
        if moves is None:
            continue
        moves = _sorted(fetches + moves)
        if dry_run(moves, occ, caps, window):
            owners = tuple(sorted({state.blocks[b].app for b in evicted}))
            return MigrationPlan(moves, incoming, len(inc) * BLOCK_SIZE,
                                 len(evicted) * BLOCK_SIZE, owners)
    return None


def _retain(state, caps, window, stay, inc_at, evicted, reserve, sched_hint, incoming):
    """Assign final tiers to evicted blocks, pushing bystanders down if needed."""
    moves = []
    flow = [(bid, GPU, MoveKind.EVICT) for bid in evicted]
    for t in (PINNED, PAGED, DISK):
        if caps[t] is None:
            moves += [_move(b, src, t, kind) for b, src, kind in flow]
            return moves
        r = reserve if any(inc_at[u] for u in range(t + 1, 4)) else 0
        avail = caps[t] - (window if t == PINNED else 0) - r - stay[t]
        pushed = []
        if avail < 0:
            if t == DISK:
                return None
            k = -avail
            for bid in _victim_blocks(state, t, sched_hint, incoming):
                pushed.append((bid, t, MoveKind.DEMOTE))
                if len(pushed) == k:
                    break
            if len(pushed) < k:
                return None
            avail = 0
        kept, flow = flow[:avail], flow[avail:]
        moves += [_move(b, src, t, kind) for b, src, kind in kept]
        flow = pushed + flow
    if flow:
        return None
    return moves


def plan_prefetch(nxt: str, state: MemState, cfg: PlannerConfig = PlannerConfig(),
                  displace: Sequence[str] = ()) -> MigrationPlan:
    """Move the next app's paged/disk blocks up into pinned memory.

    Pinned blocks of the apps in `displace` (most expendable first) may be
    demoted to paged memory to make room, as long as paged memory can take
    them before anything is promoted.
    """
    pin = state.tiers[PINNED]
    if pin.capacity is None:
        budget = float("inf")
    else:
        wsize = state.window.size if state.window is not None else cfg.streaming_window
        wused = state.window.occupied + state.window.inflight if state.window is not None else 0
        free = pin.capacity - pin.used - pin.reserved + wused
        budget = max(0, (free - wsize) // BLOCK_SIZE)
    if nxt not in state.app_chunks:
        return MigrationPlan((), nxt, 0, 0)
    paged, disk = [], []
    for b in state.app_blocks(nxt):
        if b.in_flight:
            continue
        if b.tier == PAGED:
            paged.append(b.id)
        elif b.tier == DISK:
            disk.append(b.id)
    paged.sort()
    disk.sort()
    if not paged and state.tiers[PAGED].free < BLOCK_SIZE:
        disk = []
    chosen = [(b, PAGED) for b in paged] + [(b, DISK) for b in disk]
    demote = []
    if budget != float("inf") and len(chosen) > budget:
        room = state.tiers[PAGED].free
        room = len(chosen) if room == float("inf") else int(room // BLOCK_SIZE)
        want = min(len(chosen) - int(budget), room)
        for app in displace:
            if app == nxt or app not in state.app_chunks or want <= 0:
                continue
            for b in state.app_blocks(app):
                if b.tier == PINNED and not b.in_flight and not b.in_window:
                    demote.append(b.id)
                    want -= 1
                    if want == 0:
                        break
        chosen = chosen[:int(budget) + len(demote)]
    if not chosen:
        return MigrationPlan((), nxt, 0, 0)
    moves = [_move(b, src, PINNED, MoveKind.PREFETCH) for b, src in chosen]
    moves += [_move(b, PINNED, PAGED, MoveKind.DEMOTE) for b in demote]
    return MigrationPlan(_sorted(moves), nxt, 0, 0)


# ---------------------------------------------------------------- fallback

SEARCH_LIMIT = 200_000


def _plan_search(incoming, state, sched_hint, limit=SEARCH_LIMIT) -> Optional[MigrationPlan]:
    """Exhaustive search over block counts for hierarchies where every tier is
    too full for the monotone plan.  The search follows the orchestrator's own
    rules (evictions and demotions use the window first, the window is folded
    back into ordinary space only at the end), so the path it returns can be
    replayed as single-move stages.  Minimises blocks crossing the GPU link.
    """
    caps = [float("inf") if c is None else c for c in _cap_blocks(state)]
    window = state.window.size // BLOCK_SIZE if state.window is not None else 0
    c1o = caps[1] - window
    inc = [state.app_tier[incoming][t] // BLOCK_SIZE for t in TierId]
    oth = [state.tiers[t].used // BLOCK_SIZE - inc[t] for t in TierId]
    wocc = state.window.occupied // BLOCK_SIZE if state.window is not None else 0
    n_inc = sum(inc)
    # state: (i0, i1, i2, i3, o0, o1, ow, o2, o3)
    start = (inc[0], inc[1], inc[2], inc[3], oth[0], oth[1] - wocc, wocc, oth[2], oth[3])

    def succ(s):
        i0, i1, i2, i3, o0, o1, ow, o2, o3 = s
        g = i0 + o0 < caps[0]
        p = i1 + o1 < c1o
        q = i2 + o2 < caps[2]
        r = i3 + o3 < caps[3]
        if i1 and g: yield (i0 + 1, i1 - 1, i2, i3, o0, o1, ow, o2, o3), 1, ("i", 1, 0)
        if i2 and p: yield (i0, i1 + 1, i2 - 1, i3, o0, o1, ow, o2, o3), 0, ("i", 2, 1)
        if i3 and q: yield (i0, i1, i2 + 1, i3 - 1, o0, o1, ow, o2, o3), 0, ("i", 3, 2)
        if i0 and p: yield (i0 - 1, i1 + 1, i2, i3, o0, o1, ow, o2, o3), 1, ("i", 0, 1)
        if i1 and q: yield (i0, i1 - 1, i2 + 1, i3, o0, o1, ow, o2, o3), 0, ("i", 1, 2)
        if i2 and r: yield (i0, i1, i2 - 1, i3 + 1, o0, o1, ow, o2, o3), 0, ("i", 2, 3)
        if o0:
            if ow < window: yield (i0, i1, i2, i3, o0 - 1, o1, ow + 1, o2, o3), 1, ("o", 0, 1)
            elif p: yield (i0, i1, i2, i3, o0 - 1, o1 + 1, ow, o2, o3), 1, ("o", 0, 1)
        if q:
            if ow: yield (i0, i1, i2, i3, o0, o1, ow - 1, o2 + 1, o3), 0, ("w", 1, 2)
            elif o1: yield (i0, i1, i2, i3, o0, o1 - 1, ow, o2 + 1, o3), 0, ("o", 1, 2)
        if o2 and r: yield (i0, i1, i2, i3, o0, o1, ow, o2 - 1, o3 + 1), 0, ("o", 2, 3)
        if g:
            if o1: yield (i0, i1, i2, i3, o0 + 1, o1 - 1, ow, o2, o3), 1, ("o", 1, 0)
            if ow: yield (i0, i1, i2, i3, o0 + 1, o1, ow - 1, o2, o3), 1, ("w", 1, 0)
        if o2 and p: yield (i0, i1, i2, i3, o0, o1 + 1, ow, o2 - 1, o3), 0, ("o", 2, 1)
        if o3 and q: yield (i0, i1, i2, i3, o0, o1, ow, o2 + 1, o3 - 1), 0, ("o", 3, 2)

    dist = {start: 0}
    parent = {start: None}
    dq = deque([start])
    goal = None
    expanded = 0
    while dq:
        u = dq.popleft()
        d = dist[u]
        if goal is not None and d >= dist[goal]:
            continue
        if u[0] == n_inc and u[6] <= c1o - u[1] - u[5]:
            goal = u
            continue
        expanded += 1
        if expanded > limit:
            return None
        for v, w, lab in succ(u):
            nd = d + w
            if nd < dist.get(v, 1 << 60):
                dist[v] = nd
                parent[v] = (u, lab)
                (dq.appendleft if w == 0 else dq.append)(v)
    if goal is None:
        return None
    path = []
    u = goal
    while parent[u] is not None:
        u, lab = parent[u]
        path.append(lab)
    path.reverse()
    return _realize(incoming, state, sched_hint, path)


def _realize(incoming, state, sched_hint, path) -> MigrationPlan:
    trial = copy.deepcopy(state)
    stages = []
    n_in = n_out = 0
    evicting = set()
    for role, src, dst in path:
        src, dst = TierId(src), TierId(dst)
        if role == "i":
            bid = min(b.id for b in trial.app_blocks(incoming) if b.tier == src)
            kind = MoveKind.FETCH if dst < src else MoveKind.DEMOTE
        elif role == "w":
            bid = min(trial.window_blocks)
            kind = MoveKind.DEMOTE if dst > src else MoveKind.LIFT
        elif src == PINNED and dst == PAGED and trial.window_blocks:
            bid = min(trial.window_blocks)
            kind = MoveKind.DEMOTE
        else:
            cands = [b for b in _victim_blocks(trial, src, sched_hint, incoming)
                     if not trial.blocks[b].in_window]
            bid = cands[0] if dst > src else cands[-1]
            kind = (MoveKind.EVICT if src == GPU else MoveKind.DEMOTE) if dst > src else MoveKind.LIFT
        b = trial.blocks[bid]
        if src == GPU:
            n_out += 1
            evicting.add(b.app)
        if dst == GPU:
            n_in += 1
        use_window = (src == GPU and trial.window is not None
                      and trial.window.free >= BLOCK_SIZE)
        trial.begin_move(bid, dst, use_window)
        trial.commit_move(bid, dst)
        stages.append((_move(bid, src, dst, kind),))
    return MigrationPlan((), incoming, n_in * BLOCK_SIZE, n_out * BLOCK_SIZE,
                         tuple(sorted(evicting)), tuple(stages))
