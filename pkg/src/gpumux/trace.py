"""Application trace model, workload generators and the line-oriented trace format.

Trace file grammar (one action per line, `#` starts a comment):

    <app> alloc <size> [gpu|pinned|paged|disk]
    <app> free <alloc-index>
    <app> launch <seconds> [all|<alloc-index>,<alloc-index>,...]
    <app> sync
    <app> think <seconds>
    <app> begin
    <app> end

Allocation indices count the app's `alloc` lines from 0.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from .errors import InvalidSpec, ParseError
from .units import TIER_BY_LABEL, TierId, fmt_size, parse_size


@dataclass(frozen=True)
class Alloc:
    size: int
    tier: Optional[TierId] = None


@dataclass(frozen=True)
class Free:
    ref: int


@dataclass(frozen=True)
class LaunchKernel:
    duration: float
    touched: Optional[Tuple[int, ...]] = None   # None touches every live allocation


@dataclass(frozen=True)
class BlockingSync:
    pass


@dataclass(frozen=True)
class Think:
    gap: float


@dataclass(frozen=True)
class RequestBegin:
    pass


@dataclass(frozen=True)
class RequestEnd:
    pass


Action = Union[Alloc, Free, LaunchKernel, BlockingSync, Think, RequestBegin, RequestEnd]


@dataclass(frozen=True)
class Interactive:
    interval: float          # think gap between bursts, seconds
    burst_kernels: int
    kernel_ms: float
    jitter: float = 0.0      # relative spread of the think gap

    kind = "interactive"


@dataclass(frozen=True)
class Batch:
    kernel_ms: float
    stream: Optional[int] = None   # kernel count, None runs to the horizon
    sync_every: int = 1

    kind = "batch"


@dataclass(frozen=True)
class LlmLike:
    prefill_ms: float
    decode_ms: float
    tokens: int
    think_s: float
    jitter: float = 0.0

    kind = "llm"


Generator = Union[Interactive, Batch, LlmLike]


@dataclass(frozen=True)
class AppSpec:
    name: str
    footprint: int
    generator: Optional[Generator] = None
    trace: Optional[Tuple[Action, ...]] = None
    start: float = 0.0


def _check_positive(**kw):
    for k, v in kw.items():
        if v is None or not v > 0:
            raise InvalidSpec(f"{k} must be positive, got {v!r}")


def validate_generator(g: Generator) -> None:
    if isinstance(g, Interactive):
        _check_positive(interval=g.interval, burst_kernels=g.burst_kernels, kernel_ms=g.kernel_ms)
        if not 0 <= g.jitter < 1:
            raise InvalidSpec("jitter must be in [0, 1)")
    elif isinstance(g, Batch):
        _check_positive(kernel_ms=g.kernel_ms, sync_every=g.sync_every)
        if g.stream is not None:
            _check_positive(stream=g.stream)
    elif isinstance(g, LlmLike):
        _check_positive(prefill_ms=g.prefill_ms, decode_ms=g.decode_ms, tokens=g.tokens,
                        think_s=g.think_s)
        if not 0 <= g.jitter < 1:
            raise InvalidSpec("jitter must be in [0, 1)")
    else:
        raise InvalidSpec(f"unknown generator {g!r}")


def _gap(rng, base, jitter):
    if jitter == 0:
        return base
    return base * (1 + jitter * rng.uniform(-1.0, 1.0))


def generate_trace(spec: AppSpec, seed: int, horizon: Optional[float] = None) -> List[Action]:
    """Expand an app spec into its action list.

    The footprint is allocated up front as one allocation; every kernel
    touches it.  Open-ended generators need a horizon to bound their length.
    """
    if spec.footprint <= 0:
        raise InvalidSpec("footprint must be positive")
    if spec.trace is not None:
        validate_trace(spec.trace)
        return list(spec.trace)
    g = spec.generator
    if g is None:
        raise InvalidSpec(f"app {spec.name} has neither a trace nor a generator")
    validate_generator(g)
    rng = random.Random(f"{seed}:{spec.name}")
    out: List[Action] = [Alloc(spec.footprint)]
    if spec.start > 0:
        out.append(Think(spec.start))
    if isinstance(g, Batch):
        n = g.stream
        if n is None:
            if horizon is None:
                raise InvalidSpec("an unbounded batch stream needs a horizon")
            n = math.ceil(horizon / (g.kernel_ms / 1e3)) + 1
        for i in range(n):
            out.append(LaunchKernel(g.kernel_ms / 1e3))
            if (i + 1) % g.sync_every == 0 or i == n - 1:
                out.append(BlockingSync())
        return out
    if horizon is None:
        raise InvalidSpec("a request-driven generator needs a horizon")
    if isinstance(g, Interactive):
        cycle = g.interval * (1 - g.jitter) + g.burst_kernels * g.kernel_ms / 1e3
        for _ in range(math.ceil(horizon / cycle) + 1):
            out.append(RequestBegin())
            out.extend(LaunchKernel(g.kernel_ms / 1e3) for _ in range(g.burst_kernels))
            out.append(BlockingSync())
            out.append(RequestEnd())
            out.append(Think(_gap(rng, g.interval, g.jitter)))
        return out
    cycle = g.think_s * (1 - g.jitter) + (g.prefill_ms + g.tokens * g.decode_ms) / 1e3
    for _ in range(math.ceil(horizon / cycle) + 1):
        out.append(RequestBegin())
        out.append(LaunchKernel(g.prefill_ms / 1e3))
        out.append(BlockingSync())
        for _ in range(g.tokens):
            out.append(LaunchKernel(g.decode_ms / 1e3))
            out.append(BlockingSync())
        out.append(RequestEnd())
        out.append(Think(_gap(rng, g.think_s, g.jitter)))
    return out


def validate_trace(actions) -> None:
    """Allocation refs resolve to earlier live allocs; requests nest properly."""
    nallocs = 0
    live = set()
    open_req = False
    for i, a in enumerate(actions):
        if isinstance(a, Alloc):
            if a.size <= 0:
                raise InvalidSpec(f"action {i}: allocation size must be positive")
            live.add(nallocs)
            nallocs += 1
        elif isinstance(a, Free):
            if a.ref not in live:
                raise InvalidSpec(f"action {i}: free of unknown allocation {a.ref}")
            live.discard(a.ref)
        elif isinstance(a, LaunchKernel):
            if a.duration < 0:
                raise InvalidSpec(f"action {i}: negative kernel duration")
            for r in a.touched or ():
                if r not in live:
                    raise InvalidSpec(f"action {i}: kernel touches unknown allocation {r}")
        elif isinstance(a, Think):
            if a.gap < 0:
                raise InvalidSpec(f"action {i}: negative think gap")
        elif isinstance(a, RequestBegin):
            if open_req:
                raise InvalidSpec(f"action {i}: nested request")
            open_req = True
        elif isinstance(a, RequestEnd):
            if not open_req:
                raise InvalidSpec(f"action {i}: request end without begin")
            open_req = False
        elif not isinstance(a, BlockingSync):
            raise InvalidSpec(f"action {i}: unknown action {a!r}")


# ---------------------------------------------------------------- file format
def format_action(app: str, a: Action) -> str:
    if isinstance(a, Alloc):
        tail = f" {a.tier.label}" if a.tier is not None else ""
        return f"{app} alloc {fmt_size(a.size)}{tail}"
    if isinstance(a, Free):
        return f"{app} free {a.ref}"
    if isinstance(a, LaunchKernel):
        refs = "all" if a.touched is None else ",".join(map(str, a.touched))
        return f"{app} launch {a.duration!r} {refs}"
    if isinstance(a, BlockingSync):
        return f"{app} sync"
    if isinstance(a, Think):
        return f"{app} think {a.gap!r}"
    if isinstance(a, RequestBegin):
        return f"{app} begin"
    if isinstance(a, RequestEnd):
        return f"{app} end"
    raise InvalidSpec(f"unknown action {a!r}")


def dump_traces(traces: Dict[str, List[Action]]) -> str:
    lines = []
    for app, actions in traces.items():
        lines.extend(format_action(app, a) for a in actions)
    return "\n".join(lines) + "\n"


def _parse_float(tok, lineno, col):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno, col) from None


def _parse_int(tok, lineno, col):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno, col) from None


def parse_traces(text: str) -> Dict[str, List[Action]]:
    traces: Dict[str, List[Action]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        toks = line.split()
        if not toks:
            continue
        cols = [raw.index(t) + 1 for t in toks]
        if len(toks) < 2:
            raise ParseError("expected '<app> <action> ...'", lineno, cols[0])
        app, op, args = toks[0], toks[1], toks[2:]
        arity = {"alloc": (1, 2), "free": (1, 1), "launch": (1, 2), "sync": (0, 0),
                 "think": (1, 1), "begin": (0, 0), "end": (0, 0)}
        if op not in arity:
            raise ParseError(f"unknown action {op!r}", lineno, cols[1])
        lo, hi = arity[op]
        if not lo <= len(args) <= hi:
            raise ParseError(f"{op} takes {lo}-{hi} arguments", lineno, cols[1])
        if op == "alloc":
            try:
                size = parse_size(args[0])
            except ValueError as e:
                raise ParseError(str(e), lineno, cols[2]) from None
            tier = None
            if len(args) == 2:
                if args[1] not in TIER_BY_LABEL:
                    raise ParseError(f"unknown tier {args[1]!r}", lineno, cols[3])
                tier = TIER_BY_LABEL[args[1]]
            act: Action = Alloc(size, tier)
        elif op == "free":
            act = Free(_parse_int(args[0], lineno, cols[2]))
        elif op == "launch":
            dur = _parse_float(args[0], lineno, cols[2])
            touched = None
            if len(args) == 2 and args[1] != "all":
                touched = tuple(_parse_int(t, lineno, cols[3]) for t in args[1].split(","))
            act = LaunchKernel(dur, touched)
        elif op == "sync":
            act = BlockingSync()
        elif op == "think":
            act = Think(_parse_float(args[0], lineno, cols[2]))
        elif op == "begin":
            act = RequestBegin()
        else:
            act = RequestEnd()
        traces.setdefault(app, []).append(act)
    for app, actions in traces.items():
        try:
            validate_trace(actions)
        except InvalidSpec as e:
            raise ParseError(f"app {app}: {e}") from None
    return traces
