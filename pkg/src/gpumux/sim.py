"""Discrete-event engine: app traces, the execution-gate protocol and metrics.

Context switch under the proactive policy, for incumbent X and incoming Y:

    t0          scheduler decides; X's gate closes, pause message sent
    t0+ipc..    X drains: every kernel it already launched completes
    drain+ipc   X acknowledges the pause (evictions of X's blocks may start)
    t_plan      planner runs once no transfer is in flight (cancels prefetch)
    t_plan+ipc  fetch legs start (into free GPU space, even during the drain)
    done        plan complete
    grant       max(done, ack) + ipc; Y's gate opens

The demand-paging policy follows the same pause/drain/grant handshake with an
empty plan; the incoming app then faults its data in while running.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from . import __version__
from .errors import CapacityExceeded, InvariantViolation
from .memory import MemState
from .orchestrator import Orchestrator, TransferLog, windows_throughput
from .planner import plan_prefetch, plan_switch
from .scenario import NixiePolicy, Scenario, UvmRRPolicy, policy_to_dict, scenario_to_dict
from .scheduler import ApiEvent, MlfqScheduler, RoundRobinScheduler
from .trace import (Alloc, BlockingSync, Free, LaunchKernel, RequestBegin, RequestEnd, Think,
                    generate_trace)
from .units import BLOCK_SIZE, CHUNK_MAX, TierId, blocks_for
from .uvm import UvmConfig, UvmMemory

GPU, PINNED, PAGED, DISK = TierId.GPU, TierId.PINNED, TierId.PAGED, TierId.DISK
EPS = 1e-9


@dataclass
class SwitchRecord:
    t0: float
    frm: Optional[str]
    to: str
    pause_wait: float = 0.0
    plan_moves: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    transfer_time: float = 0.0
    total: float = 0.0
    prefetch_hit_bytes: int = 0
    window: Optional[tuple] = None
    granted_at: Optional[float] = None


@dataclass
class RequestRecord:
    begin: float
    level: Optional[int]
    ttft: Optional[float] = None
    latency: Optional[float] = None
    launched: bool = False


class _App:
    def __init__(self, name, actions, start):
        self.name = name
        self.actions = actions
        self.pc = 0
        self.start = start
        self.state = "ready"
        self.allocs: List[Optional[list]] = []
        self.inflight = 0
        self.last_kernel_end = 0.0
        self.work = 0.0
        self.paused = False
        self.req: Optional[RequestRecord] = None
        self.requests: List[RequestRecord] = []
        self.finished_at: Optional[float] = None
        self.kernels = 0

    @property
    def done(self):
        return self.state == "done"


class _SwitchCtx:
    def __init__(self, kind, frm, to, t0, record):
        self.kind = kind           # "switch" or "fault_in"
        self.frm = frm
        self.to = to
        self.t0 = t0
        self.record = record
        self.ack = t0
        self.job = None
        self.planned = False


class Simulation:
    def __init__(self, scn: Scenario, check_invariants: bool = False, logs: Optional[dict] = None):
        self.scn = scn
        self.check = check_invariants
        self.logs = logs if logs is not None else {}
        self.now = 0.0
        self.heap: list = []
        self._seq = 0
        hw = scn.hardware
        self.ipc = hw.ipc_latency
        self.horizon = scn.horizon
        pol = scn.policy
        self.nixie = isinstance(pol, NixiePolicy)
        self.transfer_log = TransferLog()
        sched_log = [] if "sched" in self.logs else None
        if self.nixie:
            pinned = hw.pinned
            if pol.planner.pinned_budget is not None:
                pinned = min(pinned, pol.planner.pinned_budget)
            self.mem = MemState({GPU: hw.gpu, PINNED: pinned, PAGED: hw.paged, DISK: hw.disk})
            if pinned >= pol.planner.streaming_window:
                self.mem.reserve_streaming_window(PINNED, pol.planner.streaming_window)
            self.orch = Orchestrator(self.mem, hw.links(), hw.dispatch_overhead, self.transfer_log)
            self.sched = MlfqScheduler(pol.mlfq, log=sched_log)
            self.tick = pol.mlfq.tick
            self.idle_threshold = pol.mlfq.idle_threshold
            self.uvm = None
        else:
            self.mem = None
            self.orch = None
            ucfg = UvmConfig(pol.uvm.fault_latency, pol.uvm.prefetch_pages, hw.gpu_link.up)
            self.fault_log = [] if "faults" in self.logs else None
            self.uvm = UvmMemory(hw.gpu, ucfg, self.transfer_log, self.fault_log)
            self.sched = RoundRobinScheduler(pol.window, pol.idle_threshold, pol.tick, log=sched_log)
            self.tick = pol.tick
            self.idle_threshold = pol.idle_threshold
        self.sched_log = sched_log
        self.apps: Dict[str, _App] = {}
        for spec in scn.apps:
            actions = generate_trace(spec, scn.seed, scn.horizon)
            self.apps[spec.name] = _App(spec.name, actions, spec.start)
        self.gpu_busy_until = 0.0
        self.kernel_log: List[tuple] = []
        self.switch: Optional[_SwitchCtx] = None
        self.switches: List[SwitchRecord] = []
        self.tenure: Optional[SwitchRecord] = None
        self.prefetch_job = None
        self.prefetched: Dict[str, set] = {}
        self.mem_waiters: List[str] = []
        self.fault_windows: List[tuple] = []
        self.demand_stalls = 0
        self.uvm_link_busy = 0.0
        self.last_sched: Dict[str, float] = {}
        self._mem_epoch = 0
        self._prefetch_miss = None

    # ------------------------------------------------------------ events
    def push(self, t, kind, payload=None):
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, payload))

    def run(self):
        for name, app in self.apps.items():
            self.sched.register(name, 0.0)
            if self.nixie:
                self.mem.register_app(name)
            else:
                self.uvm.register(name)
            self.push(0.0, "resume", name)
        self.push(self.tick, "tick")
        orch = self.orch
        while True:
            t_heap = self.heap[0][0] if self.heap else math.inf
            t_orch = orch.next_event_time() if orch is not None else None
            if t_orch is not None and t_orch <= t_heap:
                if t_orch > self.horizon:
                    break
                finished = orch.advance(min(t_heap, self.horizon), stop_on_finish=True)
                self._set_time(orch.now)
                for job in finished:
                    self._job_finished(job)
                self._after_orch()
                continue
            if t_heap > self.horizon:
                break
            t, _, kind, payload = heapq.heappop(self.heap)
            self._set_time(t)
            if orch is not None:
                orch.advance(t)
            getattr(self, "_on_" + kind)(payload)
        self._finish()
        return self

    def _set_time(self, t):
        if t < self.now - EPS:
            raise InvariantViolation(f"clock went backwards: {t} < {self.now}")
        self.now = max(self.now, t)

    # ------------------------------------------------------------ app traces
    def _on_resume(self, name):
        app = self.apps[name]
        if app.state in ("think", "ready", "wait_mem"):
            app.state = "ready"
            self._step(app)

    def _gate_open(self, app: _App) -> bool:
        return self.sched.running == app.name and not app.paused

    def _mem_ready(self) -> bool:
        if self.orch is None:
            return True
        if self.mem.inflight_bytes or (self.prefetch_job is not None and not self.prefetch_job.done):
            return False
        return self.switch is None or not self.switch.planned

    def _step(self, app: _App):
        now = self.now
        acts = app.actions
        while app.pc < len(acts):
            a = acts[app.pc]
            if isinstance(a, LaunchKernel):
                if not self._gate_open(app):
                    if app.state != "wait_grant":
                        app.state = "wait_grant"
                        self.push(now + self.ipc, "arrive", app.name)
                    return
                if self.nixie and not self._resident(app, a):
                    self._fault_in(app)
                    return
                self._launch(app, a)
                self.sched.on_api_event(app.name, now, ApiEvent.NON_BLOCKING_RETURN)
                app.pc += 1
            elif isinstance(a, BlockingSync):
                if app.inflight:
                    self.sched.on_api_event(app.name, now, ApiEvent.BLOCKING_ENTER)
                    app.state = "sync"
                    return
                self.sched.on_api_event(app.name, now, ApiEvent.NON_BLOCKING_RETURN)
                app.pc += 1
            elif isinstance(a, Think):
                app.pc += 1
                app.state = "think"
                self._idle_watch(app)
                self.push(now + a.gap, "resume", app.name)
                return
            elif isinstance(a, (Alloc, Free)):
                if not self._mem_ready():
                    app.state = "wait_mem"
                    self.mem_waiters.append(app.name)
                    return
                if isinstance(a, Alloc):
                    app.allocs.append(self._alloc(app, a))
                else:
                    self._free(app, a.ref)
                app.pc += 1
            elif isinstance(a, RequestBegin):
                app.req = RequestRecord(now, self.sched.level(app.name))
                app.pc += 1
            elif isinstance(a, RequestEnd):
                if app.req is not None:
                    app.req.latency = now - app.req.begin
                    app.requests.append(app.req)
                    app.req = None
                app.pc += 1
            else:
                raise InvariantViolation(f"unknown action {a!r}")
        if app.inflight:
            # wait for outstanding kernels before calling the app finished
            app.state = "sync"
            return
        app.state = "done"
        app.finished_at = now
        self.sched.retire(app.name, now)
        self._evaluate()

    def _touched(self, app: _App, a: LaunchKernel):
        refs = range(len(app.allocs)) if a.touched is None else a.touched
        out = []
        for r in refs:
            chunks = app.allocs[r]
            if chunks is not None:
                out.extend(chunks)
        return out

    def _resident(self, app, a) -> bool:
        mem = self.mem
        apt = mem.app_tier[app.name]
        if apt[GPU] == apt[0] + apt[1] + apt[2] + apt[3] and not mem.inflight_bytes:
            return True
        for c in self._touched(app, a):
            if not mem.chunk_on_gpu(c):
                return False
        return True

    def _launch(self, app: _App, a: LaunchKernel):
        now = self.now
        start = max(now, self.gpu_busy_until)
        dur = a.duration
        if self.uvm is not None:
            eff = self.uvm.touch_kernel(app.name, self._touched(app, a), dur, start)
            fault = eff - dur
            if fault > 0:
                self.fault_windows.append((start, start + fault))
                self.uvm_link_busy += fault
                if self.tenure is not None:
                    # demand paging pays its switch cost after the grant
                    self.tenure.transfer_time += fault
                    self.tenure.total += fault
            dur = eff
        end = start + dur
        self.gpu_busy_until = end
        self.kernel_log.append((start, end, app.name))
        app.inflight += 1
        app.kernels += 1
        app.last_kernel_end = end
        first = app.req is not None and not app.req.launched
        if first:
            app.req.launched = True
        self.push(end, "kdone", (app.name, a.duration, first))

    def _on_kdone(self, payload):
        name, work, first = payload
        app = self.apps[name]
        now = self.now
        app.inflight -= 1
        app.work += work
        if first and app.req is not None and app.req.ttft is None:
            app.req.ttft = now - app.req.begin
        elif first and app.requests and app.requests[-1].ttft is None:
            app.requests[-1].ttft = now - app.requests[-1].begin
        if app.state == "sync" and app.inflight == 0:
            self.sched.on_api_event(name, now, ApiEvent.BLOCKING_EXIT)
            if app.pc < len(app.actions):
                app.pc += 1
            app.state = "ready"
            self._step(app)

    def _idle_watch(self, app: _App):
        t = self.sched.idle_at(app.name)
        if t is not None:
            self.push(max(self.now, t + EPS), "idle", app.name)

    def _on_idle(self, name):
        if self.sched.is_idle(name, self.now):
            self._evaluate()

    def _on_arrive(self, name):
        app = self.apps[name]
        if app.state == "wait_grant":
            if self._gate_open(app):
                app.state = "ready"
                self._step(app)
            else:
                self.sched.enqueue(name, self.now)
                self._idle_watch(app)

    def _on_tick(self, _):
        self._evaluate()
        nxt = self.now + self.tick
        if nxt <= self.horizon:
            self.push(nxt, "tick")

    # ------------------------------------------------------------ memory
    def _alloc(self, app: _App, a: Alloc):
        self._mem_epoch += 1
        if self.uvm is not None:
            return self.uvm.allocate(app.name, a.size)
        mem = self.mem
        out = []
        remaining = a.size
        order = list(TierId)
        if a.tier is not None:
            order.remove(a.tier)
            order.insert(0, a.tier)
        while remaining > 0:
            part = min(remaining, CHUNK_MAX)
            remaining -= part
            need = blocks_for(part) * BLOCK_SIZE
            for t in order:
                if mem.tiers[t].free >= need:
                    out.extend(mem.allocate(app.name, part, t))
                    break
            else:
                raise CapacityExceeded("hierarchy", need, 0)
        if self.check:
            mem.check_invariants()
        return out

    def _free(self, app: _App, ref: int):
        self._mem_epoch += 1
        chunks = app.allocs[ref]
        app.allocs[ref] = None
        for c in chunks:
            if self.uvm is not None:
                self.uvm.free(app.name, c)
            else:
                self.mem.free(app.name, c)

    def _wake_mem_waiters(self):
        if not self.mem_waiters or not self._mem_ready():
            return
        waiters, self.mem_waiters = self.mem_waiters, []
        for name in waiters:
            self.push(self.now, "resume", name)

    # ------------------------------------------------------------ scheduling
    def _evaluate(self):
        now = self.now
        sched = self.sched
        sched.accrue(now)
        for name, app in self.apps.items():
            if not app.done:
                sched.infer_priority(name, now)
        if self.switch is not None:
            return
        r = sched.running
        if r is not None:
            ra = self.apps[r]
            if ra.done or sched.is_idle(r, now):
                nxt = sched.select_next(now)
                if nxt is not None:
                    self._start_switch(r, nxt)
                elif ra.done:
                    sched.release(now)
                    self.last_sched[r] = now
            elif sched.should_preempt(r, now):
                self._start_switch(r, sched.select_next(now))
        else:
            nxt = sched.select_next(now)
            if nxt is not None:
                self._start_switch(None, nxt)
        self._maybe_prefetch()

    def _lrs_order(self, exclude):
        names = [a for a in self.apps if a != exclude]
        return sorted(names, key=lambda a: (self.last_sched.get(a, -1.0), a))

    def _start_switch(self, frm, to):
        now = self.now
        rec = SwitchRecord(now, frm, to)
        ctx = _SwitchCtx("switch", frm, to, now, rec)
        self.switch = ctx
        if frm is not None:
            self.sched.release(now)
            self.last_sched[frm] = now
            fa = self.apps[frm]
            fa.paused = True
            drain_end = max(now + self.ipc, fa.last_kernel_end if fa.inflight else now)
            rec.pause_wait = drain_end - now
            ctx.ack = drain_end + self.ipc
        else:
            ctx.ack = now
        if self.tenure is not None:
            self.tenure = None
        if self.nixie:
            self._try_plan(ctx)
        else:
            self.push(max(now + self.ipc, ctx.ack) + self.ipc, "grant", ctx)

    def _try_plan(self, ctx):
        job = self.prefetch_job
        if job is not None and not job.done:
            self.orch.cancel(job)
            if job.done:
                self.prefetch_job = None
        if self.mem.inflight_bytes:
            return          # retried once the in-flight legs land
        self.prefetch_job = None
        now = self.now
        ctx.planned = True
        inc = ctx.to
        hits = self.prefetched.pop(inc, set())
        if hits:
            ctx.record.prefetch_hit_bytes = BLOCK_SIZE * sum(
                1 for b in hits if b in self.mem.blocks and self.mem.blocks[b].tier == PINNED)
        plan = plan_switch(inc, self.mem, self.scn.policy.planner, self._lrs_order(inc))
        rec = ctx.record
        rec.plan_moves = len(plan)
        rec.bytes_in = plan.bytes_in
        rec.bytes_out = plan.bytes_out
        start = now + self.ipc
        if not self.scn.policy.fetch_during_drain:
            start = max(start, ctx.ack)
        ctx.job = self.orch.submit(plan, start, "switch", evict_hold=ctx.ack, tag=ctx)
        if ctx.job.done:
            self._switch_transfers_done(ctx, ctx.job)

    def _after_orch(self):
        ctx = self.switch
        if ctx is not None and not ctx.planned and not self.mem.inflight_bytes:
            self._try_plan(ctx)
        self._wake_mem_waiters()

    def _job_finished(self, job):
        if self.check:
            self.mem.check_invariants()
        if job.kind == "prefetch":
            if job is self.prefetch_job:
                self.prefetch_job = None
            return
        ctx = job.tag
        self._switch_transfers_done(ctx, job)

    def _switch_transfers_done(self, ctx, job):
        rec = ctx.record
        if not job.plan.empty:
            rec.transfer_time = job.done_at - job.start
            rec.window = (job.first_leg if job.first_leg is not None else job.start, job.done_at)
        if ctx.kind == "fault_in":
            self.switch = None
            self._wake_mem_waiters()
            app = self.apps[ctx.to]
            if app.state == "wait_mem":
                app.state = "ready"
            self.push(self.now, "resume", ctx.to)
            return
        self.push(max(job.done_at, ctx.ack) + self.ipc, "grant", ctx)

    def _on_grant(self, ctx):
        now = self.now
        rec = ctx.record
        rec.granted_at = now
        rec.total = now - ctx.t0
        self.switch = None
        if ctx.frm is not None:
            self.apps[ctx.frm].paused = False
        self.sched.grant(ctx.to, now)
        self.last_sched[ctx.to] = now
        self.switches.append(rec)
        self.tenure = rec
        self._wake_mem_waiters()
        app = self.apps[ctx.to]
        if app.state == "wait_grant":
            app.state = "ready"
            self._step(app)
        self._maybe_prefetch()

    def _fault_in(self, app: _App):
        """The granted app touches data that is not on the GPU (e.g. a fresh
        allocation spilled to a lower tier): bring it up before launching."""
        self.demand_stalls += 1
        app.state = "wait_mem"
        rec = SwitchRecord(self.now, app.name, app.name)
        ctx = _SwitchCtx("fault_in", None, app.name, self.now, rec)
        self.switch = ctx
        self._try_plan(ctx)

    def _maybe_prefetch(self):
        if not self.nixie or not self.scn.policy.prefetch:
            return
        if self.switch is not None or (self.prefetch_job is not None and not self.prefetch_job.done):
            return
        if self.mem.inflight_bytes:
            return
        cand = self.sched.next_prefetch_candidate()
        if cand is None or cand == self.sched.running:
            return
        apt = self.mem.app_tier[cand]
        if apt[PAGED] + apt[DISK] == 0:
            return
        # skip re-planning while nothing has moved since the last empty attempt
        key = (cand, self.sched.running, len(self.transfer_log.records), self._mem_epoch)
        if key == self._prefetch_miss:
            return
        others = [a for a in self.apps if a not in (cand, self.sched.running)]
        displace = sorted(others, key=lambda a: (-self.last_sched.get(a, -1.0), a))
        plan = plan_prefetch(cand, self.mem, self.scn.policy.planner, displace)
        if plan.empty:
            self._prefetch_miss = key
            return
        self.prefetched.setdefault(cand, set()).update(m.block for m in plan.moves
                                                       if m.dst == PINNED)
        self.prefetch_job = self.orch.submit(plan, self.now, "prefetch")

    # ------------------------------------------------------------ wrap-up
    def _finish(self):
        self.end = min(self.now, self.horizon)
        if self.check:
            self.check_invariants()

    def check_invariants(self):
        if self.mem is not None:
            self.mem.check_invariants()
        log = sorted(self.kernel_log)
        for (s0, e0, a0), (s1, e1, a1) in zip(log, log[1:]):
            if a0 != a1 and s1 < e0 - EPS:
                raise InvariantViolation(f"kernels of {a0} and {a1} overlap at t={s1}")


def _percentile(xs, q):
    if not xs:
        return None
    xs = sorted(xs)
    k = (len(xs) - 1) * q
    lo = math.floor(k)
    hi = math.ceil(k)
    return xs[lo] + (xs[hi] - xs[lo]) * (k - lo)


def _mean(xs):
    return sum(xs) / len(xs) if xs else None


def _level1(reqs):
    if not reqs or reqs[0].level is None:
        return None
    return sum(1 for r in reqs if r.level == 1) / len(reqs)


def _throughput(sim: Simulation, app: _App):
    end = app.finished_at if app.finished_at is not None else sim.horizon
    span = end - app.start
    return app.work / span if span > 0 else 0.0


def collect_metrics(sim: Simulation, standalone: Optional[Dict[str, float]] = None) -> dict:
    scn = sim.scn
    warm = scn.warmup
    apps = {}
    norms = []
    for name, app in sim.apps.items():
        reqs = [r for r in app.requests if r.begin >= warm]
        ttft = [r.ttft for r in reqs if r.ttft is not None]
        lat = [r.latency for r in reqs if r.latency is not None]
        thr = _throughput(sim, app)
        norm = None
        if standalone is not None and standalone.get(name):
            norm = thr / standalone[name]
            norms.append(norm)
        st = sim.sched.apps[name]
        apps[name] = {
            "requests": len(reqs),
            "ttft_mean": _mean(ttft),
            "ttft_p50": _percentile(ttft, 0.5),
            "ttft_p95": _percentile(ttft, 0.95),
            "latency_mean": _mean(lat),
            "latency_p50": _percentile(lat, 0.5),
            "latency_p95": _percentile(lat, 0.95),
            "level1_fraction": _level1(reqs),
            "final_level": sim.sched.level(name),
            "grants": st.grants,
            "kernels": app.kernels,
            "work_seconds": app.work,
            "throughput": thr,
            "normalized_throughput": norm,
            "finished_at": app.finished_at,
        }
    counted = [s for s in sim.switches if s.frm is not None and s.t0 >= warm]
    totals = [s.total for s in counted]
    xfer = [s.transfer_time for s in counted]
    if sim.nixie:
        windows = [s.window for s in counted if s.window is not None]
        links = {k: v / sim.horizon for k, v in sim.orch.channel_busy_time().items()}
        pinned_peak = sim.mem.pinned_peak
        padding = sim.mem.padding
        mirror = None
    else:
        windows = [w for w in sim.fault_windows if w[0] >= warm]
        links = {"gpu<->pinned": sim.uvm_link_busy / sim.horizon}
        pinned_peak = sim.uvm.mirror_peak
        padding = 0
        mirror = sim.uvm.pinned_mirror_usage()
    to_gpu, from_gpu, bidir = windows_throughput(sim.transfer_log.records, windows)
    finished = [a.finished_at for a in sim.apps.values()]
    jain = None
    if norms:
        s1 = sum(norms)
        s2 = sum(x * x for x in norms)
        jain = s1 * s1 / (len(norms) * s2) if s2 > 0 else None
    glob = {
        "switches": len(counted),
        "switches_all": len(sim.switches),
        "switch_total_mean": _mean(totals),
        "switch_total_p50": _percentile(totals, 0.5),
        "switch_total_p95": _percentile(totals, 0.95),
        "switch_transfer_mean": _mean(xfer),
        "switch_transfer_p50": _percentile(xfer, 0.5),
        "switch_transfer_p95": _percentile(xfer, 0.95),
        "switch_pause_wait_mean": _mean([s.pause_wait for s in counted]),
        "switch_bytes_in_mean": _mean([s.bytes_in for s in counted]),
        "switch_bytes_out_mean": _mean([s.bytes_out for s in counted]),
        "switch_window_to_gpu": to_gpu,
        "switch_window_from_gpu": from_gpu,
        "switch_window_bidirectional": bidir,
        "prefetch_hit_bytes": sum(s.prefetch_hit_bytes for s in sim.switches),
        "pinned_peak": pinned_peak,
        "pinned_mirror": mirror,
        "internal_fragmentation": padding,
        "demand_stalls": sim.demand_stalls,
        "uvm_faults": sim.uvm.faults if sim.uvm is not None else None,
        "link_utilization": links,
        "fairness_jain": jain,
        "makespan": max(finished) if finished and all(f is not None for f in finished) else None,
    }
    switches = [{
        "t0": s.t0, "from": s.frm, "to": s.to, "pause_wait": s.pause_wait,
        "plan_moves": s.plan_moves, "bytes_in": s.bytes_in, "bytes_out": s.bytes_out,
        "transfer_time": s.transfer_time, "total": s.total,
        "prefetch_hit_bytes": s.prefetch_hit_bytes,
    } for s in sim.switches]
    pol = scn.policy
    return {
        "scenario": scn.name,
        "policy": pol.kind,
        "seed": scn.seed,
        "horizon": scn.horizon,
        "warmup": scn.warmup,
        "config": scenario_to_dict(scn),
        "metadata": {
            "version": __version__,
            "fetch_during_drain": bool(getattr(pol, "fetch_during_drain", False)),
            "units": "binary (GiB, GiB/s)",
            "ttft": "request begin to first kernel completion",
            "fairness": "jain index over normalized throughput",
        },
        "apps": apps,
        "global": glob,
        "switches": switches,
    }


def standalone_profile(scn: Scenario) -> Dict[str, float]:
    out = {}
    for spec in scn.apps:
        solo = replace(scn, apps=(spec,), name=f"{scn.name}/{spec.name}")
        sim = Simulation(solo).run()
        out[spec.name] = _throughput(sim, sim.apps[spec.name])
    return out


def run(scn: Scenario, check_invariants: bool = False, logs: Optional[dict] = None,
        standalone: bool = True) -> dict:
    """Simulate a scenario and return its metrics report as a plain dict."""
    prof = standalone_profile(scn) if standalone else None
    sim = Simulation(scn, check_invariants, logs).run()
    report = collect_metrics(sim, prof)
    if logs is not None:
        if "transfers" in logs:
            logs["transfers"] = list(sim.transfer_log.csv_rows())
        if "faults" in logs:
            logs["faults"] = list(sim.fault_log or [])
        if "sched" in logs:
            logs["sched"] = list(sim.sched_log or [])
    return report
