"""Execution-grant schedulers: an MLFQ with idleness-based priority inference,
and a fixed-window round-robin used as the demand-paging comparison point."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional

from .errors import UnknownApp


class ApiEvent(Enum):
    NON_BLOCKING_RETURN = "return"
    BLOCKING_ENTER = "enter"
    BLOCKING_EXIT = "exit"


class Decision(Enum):
    UNCHANGED = "unchanged"
    DEMOTE = "demote"
    PROMOTE = "promote"


@dataclass(frozen=True)
class MlfqConfig:
    levels: int = 4
    allot_base: float = 8.0       # T[1]
    preempt_base: float = 4.0     # S[1]
    idle_threshold: float = 0.1
    tick: float = 0.01
    # a pending app at a strictly higher level takes the grant at the next
    # evaluation instead of waiting out S[p] of the running app
    preempt_higher: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("need at least one level")
        if not (0 < self.preempt_base < self.allot_base):
            raise ValueError("require 0 < S[1] < T[1]")
        if self.idle_threshold <= 0 or self.tick <= 0:
            raise ValueError("idle threshold and tick must be positive")

    def T(self, p: int) -> float:
        """Time allotment of level p (1-based)."""
        return self.allot_base * 2 ** (p - 1)

    def S(self, p: int) -> float:
        """Preemption threshold of level p (1-based)."""
        return self.preempt_base * 2 ** (p - 1)


@dataclass(frozen=True)
class PendingFactor:
    R: float
    N: int

    def __post_init__(self):
        if self.N >= 1 and not self.R < 1 / self.N:
            raise ValueError(f"R={self.R} must be < 1/N={1 / self.N}")


def priority_decision(level: int, t_a: float, i_a: float, p_a: float, q_a: float,
                      idle: bool, R: float, cfg: MlfqConfig = MlfqConfig()) -> Decision:
    """One step of priority inference for a single app (pure)."""
    T = cfg.T
    if t_a > T(level):
        return Decision.DEMOTE
    if idle and level >= 2 and p_a > T(level) and i_a - R * q_a > T(level - 1) + t_a:
        return Decision.PROMOTE
    return Decision.UNCHANGED


@dataclass
class AppSchedState:
    app: str
    level: int = 1
    t_a: float = 0.0
    last_api_return: float = 0.0
    in_blocking_call: bool = False
    enqueued_at: Optional[float] = None
    last_change: float = 0.0
    last_grant_end: float = 0.0
    last_accrue: float = 0.0
    grants: int = 0
    active: bool = True

    def i_a(self, now):
        if self.in_blocking_call:
            return 0.0
        return max(0.0, now - max(self.last_api_return, self.last_grant_end))

    def p_a(self, now):
        return now - self.last_change

    def q_a(self, now):
        return 0.0 if self.enqueued_at is None else now - self.enqueued_at


class _Base:
    def __init__(self, idle_threshold: float, log=None):
        self.idle_threshold = idle_threshold
        self.apps: Dict[str, AppSchedState] = {}
        self.running: Optional[str] = None
        self.grant_start = 0.0
        self.log = log

    def _st(self, app) -> AppSchedState:
        st = self.apps.get(app)
        if st is None:
            raise UnknownApp(app)
        return st

    def register(self, app: str, now: float = 0.0) -> None:
        self.apps[app] = AppSchedState(app, last_api_return=now, last_change=now,
                                       last_grant_end=now, last_accrue=now)
        self._log(now, app, "register")

    def retire(self, app: str, now: float) -> None:
        st = self._st(app)
        st.active = False
        st.enqueued_at = None
        self._log(now, app, "retire")

    def on_api_event(self, app: str, now: float, kind: ApiEvent) -> None:
        st = self._st(app)
        if kind == ApiEvent.BLOCKING_ENTER:
            st.in_blocking_call = True
        elif kind == ApiEvent.BLOCKING_EXIT:
            st.in_blocking_call = False
            st.last_api_return = now
        else:
            st.last_api_return = now

    def is_idle(self, app: str, now: float) -> bool:
        st = self._st(app)
        return not st.in_blocking_call and now - st.last_api_return > self.idle_threshold

    def idle_at(self, app: str) -> Optional[float]:
        """Earliest instant at which the app would count as idle, or None if blocked."""
        st = self._st(app)
        if st.in_blocking_call:
            return None
        return st.last_api_return + self.idle_threshold

    def enqueue(self, app: str, now: float) -> None:
        st = self._st(app)
        if st.enqueued_at is None:
            st.enqueued_at = now
            self._log(now, app, "enqueue")

    def pending(self) -> List[str]:
        return [a for a, st in self.apps.items()
                if st.enqueued_at is not None and st.active and a != self.running]

    def grant(self, app: str, now: float) -> None:
        st = self._st(app)
        st.enqueued_at = None
        st.grants += 1
        st.last_accrue = now
        self.running = app
        self.grant_start = now
        self._log(now, app, "grant")

    def release(self, now: float) -> Optional[str]:
        app = self.running
        if app is None:
            return None
        self.accrue(now)
        self.apps[app].last_grant_end = now
        self.running = None
        self._log(now, app, "release")
        return app

    def accrue(self, now: float) -> None:
        pass

    def run_time(self, now: float) -> float:
        return now - self.grant_start if self.running is not None else 0.0

    def _log(self, now, app, event):
        if self.log is None:
            return
        st = self.apps[app]
        self.log.append((now, app, event, st.level, st.t_a, st.i_a(now), st.p_a(now), st.q_a(now)))


class MlfqScheduler(_Base):
    def __init__(self, cfg: MlfqConfig = MlfqConfig(), log=None):
        super().__init__(cfg.idle_threshold, log)
        self.cfg = cfg

    def accrue(self, now: float) -> None:
        """Charge the running app's non-idle time since the last charge to t_a."""
        app = self.running
        if app is None:
            return
        st = self.apps[app]
        start = max(st.last_accrue, self.grant_start)
        if st.in_blocking_call:
            end = now
        else:
            end = min(now, st.last_api_return + self.idle_threshold)
        if end > start:
            st.t_a += end - start
        st.last_accrue = now

    def pending_factor(self, level: int) -> PendingFactor:
        n = sum(1 for st in self.apps.values() if st.active and st.level == level)
        n = max(n, 1)
        return PendingFactor(1.0 / (2 * n), n)

    def infer_priority(self, app: str, now: float, R: Optional[PendingFactor] = None) -> Decision:
        st = self._st(app)
        if R is None:
            R = self.pending_factor(st.level)
        d = priority_decision(st.level, st.t_a, st.i_a(now), st.p_a(now), st.q_a(now),
                              self.is_idle(app, now), R.R, self.cfg)
        if d == Decision.DEMOTE:
            st.t_a = 0.0
            if st.level < self.cfg.levels:
                st.level += 1
                st.last_change = now
            self._log(now, app, "demote")
        elif d == Decision.PROMOTE:
            st.t_a = 0.0
            st.level -= 1
            st.last_change = now
            self._log(now, app, "promote")
        return d

    def select_next(self, now: float = 0.0) -> Optional[str]:
        cands = self.pending()
        if not cands:
            return None
        return min(cands, key=lambda a: (self.apps[a].level, self.apps[a].enqueued_at, a))

    def should_preempt(self, running: str, now: float) -> bool:
        p = self._st(running).level
        levels = [self.apps[a].level for a in self.pending() if a != running]
        if not levels:
            return False
        if self.cfg.preempt_higher and min(levels) < p:
            return True
        return self.run_time(now) >= self.cfg.S(p) and min(levels) <= p

    def next_prefetch_candidate(self) -> Optional[str]:
        return self.select_next()

    def level(self, app: str) -> int:
        return self._st(app).level


class RoundRobinScheduler(_Base):
    """Fixed time window per grant, longest-waiting app next."""

    def __init__(self, window: float, idle_threshold: float = 0.1, tick: float = 0.01, log=None):
        super().__init__(idle_threshold, log)
        if window <= 0:
            raise ValueError("round-robin window must be positive")
        self.window = window
        self.tick = tick

    def select_next(self, now: float = 0.0) -> Optional[str]:
        cands = self.pending()
        if not cands:
            return None
        return min(cands, key=lambda a: (self.apps[a].enqueued_at, a))

    def should_preempt(self, running: str, now: float) -> bool:
        return bool(self.pending()) and self.run_time(now) >= self.window

    def next_prefetch_candidate(self) -> Optional[str]:
        return None

    def infer_priority(self, app, now, R=None) -> Decision:
        return Decision.UNCHANGED

    def level(self, app: str) -> Optional[int]:
        """Round-robin has no priority levels."""
        self._st(app)
        return None
