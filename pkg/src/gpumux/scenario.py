"""Scenario files: JSON documents describing apps, hardware and policy.

Sizes are strings such as "24GiB" (binary units) or plain byte counts;
bandwidths are "64GiB/s" or bytes per second.  Every omitted field takes its
default, and `scenario_to_dict` writes all of them back out explicitly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

from .errors import InvalidSpec, ParseError, ValidationError
from .orchestrator import DEFAULT_OVERHEAD, Duplex, Link
from .planner import PlannerConfig
from .scheduler import MlfqConfig
from .trace import (AppSpec, Batch, Interactive, LlmLike, format_action, parse_traces,
                    validate_generator, validate_trace)
from .units import GiB, MiB, TierId, fmt_bandwidth, fmt_size, parse_bandwidth, parse_size
from .uvm import UvmConfig


@dataclass(frozen=True)
class LinkSpec:
    up: float
    down: float
    duplex: Duplex = Duplex.FULL


@dataclass(frozen=True)
class Hardware:
    gpu: int = 32 * GiB
    pinned: int = 32 * GiB
    paged: Optional[int] = 128 * GiB
    disk: Optional[int] = None
    gpu_link: LinkSpec = LinkSpec(64 * GiB, 64 * GiB, Duplex.FULL)
    host_link: LinkSpec = LinkSpec(32 * GiB, 32 * GiB, Duplex.FULL)
    disk_link: LinkSpec = LinkSpec(4 * GiB, 4 * GiB, Duplex.FULL)
    dispatch_overhead: float = DEFAULT_OVERHEAD
    ipc_latency: float = 50e-6

    def links(self):
        specs = (self.gpu_link, self.host_link, self.disk_link)
        return {TierId(i): Link(TierId(i), s.up, s.down, s.duplex) for i, s in enumerate(specs)}


@dataclass(frozen=True)
class NixiePolicy:
    mlfq: MlfqConfig = MlfqConfig()
    planner: PlannerConfig = PlannerConfig()
    prefetch: bool = True
    fetch_during_drain: bool = True

    kind = "nixie"


@dataclass(frozen=True)
class UvmRRPolicy:
    window: float = 4.0
    uvm: UvmConfig = UvmConfig()
    idle_threshold: float = 0.1
    tick: float = 0.01

    kind = "uvm_rr"


Policy = Union[NixiePolicy, UvmRRPolicy]


@dataclass(frozen=True)
class Scenario:
    name: str
    apps: Tuple[AppSpec, ...]
    hardware: Hardware = Hardware()
    policy: Policy = NixiePolicy()
    seed: int = 0
    horizon: float = 60.0
    warmup: float = 0.0


# ---------------------------------------------------------------- loading
def _pos(text, key):
    """Best-effort line/column of a key in the source text."""
    if not text or key is None:
        return None, None
    i = text.find(f'"{key}"')
    if i < 0:
        return None, None
    line = text.count("\n", 0, i) + 1
    col = i - (text.rfind("\n", 0, i) + 1) + 1
    return line, col


class _Reader:
    def __init__(self, text):
        self.text = text

    def fail(self, path, msg):
        line, col = _pos(self.text, path.rsplit(".", 1)[-1].split("[")[0])
        where = f" (line {line}, column {col})" if line is not None else ""
        return ValidationError(path, msg + where)

    def obj(self, d, path, allowed):
        if not isinstance(d, dict):
            raise self.fail(path, "expected an object")
        extra = sorted(set(d) - set(allowed))
        if extra:
            raise self.fail(f"{path}.{extra[0]}" if path else extra[0], "unknown field")
        return d

    def num(self, d, key, path, default, positive=True, allow_zero=False, integer=False):
        v = d.get(key, default)
        p = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.fail(p, f"expected a number, got {v!r}")
        if integer and v != int(v):
            raise self.fail(p, "expected an integer")
        if positive and not (v > 0 or (allow_zero and v == 0)):
            raise self.fail(p, "must be positive" if not allow_zero else "must be non-negative")
        return int(v) if integer else float(v)

    def size(self, d, key, path, default, nullable=False):
        v = d.get(key, default)
        p = f"{path}.{key}" if path else key
        if v is None:
            if nullable:
                return None
            raise self.fail(p, "required")
        try:
            n = parse_size(v)
        except ValueError as e:
            raise self.fail(p, str(e)) from None
        if n < 0:
            raise self.fail(p, "must be non-negative")
        return n

    def bw(self, v, p):
        try:
            bw = parse_bandwidth(v)
        except ValueError as e:
            raise self.fail(p, str(e)) from None
        if bw <= 0:
            raise self.fail(p, "must be positive")
        return bw


def _link(r, d, path, default: LinkSpec) -> LinkSpec:
    if d is None:
        return default
    r.obj(d, path, ("bandwidth", "up", "down", "duplex"))
    base_up, base_down = default.up, default.down
    if "bandwidth" in d:
        base_up = base_down = r.bw(d["bandwidth"], f"{path}.bandwidth")
    up = r.bw(d["up"], f"{path}.up") if "up" in d else base_up
    down = r.bw(d["down"], f"{path}.down") if "down" in d else base_down
    dx = d.get("duplex", default.duplex.value)
    if dx not in ("full", "half"):
        raise r.fail(f"{path}.duplex", "must be 'full' or 'half'")
    return LinkSpec(up, down, Duplex(dx))


def _hardware(r, d) -> Hardware:
    h = Hardware()
    if d is None:
        return h
    r.obj(d, "hardware", ("gpu", "pinned", "paged", "disk", "links", "dispatch_overhead", "ipc_latency"))
    links = r.obj(d.get("links", {}), "hardware.links", ("gpu_pinned", "pinned_paged", "paged_disk"))
    hw = Hardware(
        gpu=r.size(d, "gpu", "hardware", fmt_size(h.gpu)),
        pinned=r.size(d, "pinned", "hardware", fmt_size(h.pinned)),
        paged=r.size(d, "paged", "hardware", fmt_size(h.paged), nullable=True),
        disk=r.size(d, "disk", "hardware", h.disk, nullable=True),
        gpu_link=_link(r, links.get("gpu_pinned"), "hardware.links.gpu_pinned", h.gpu_link),
        host_link=_link(r, links.get("pinned_paged"), "hardware.links.pinned_paged", h.host_link),
        disk_link=_link(r, links.get("paged_disk"), "hardware.links.paged_disk", h.disk_link),
        dispatch_overhead=r.num(d, "dispatch_overhead", "hardware", h.dispatch_overhead, allow_zero=True),
        ipc_latency=r.num(d, "ipc_latency", "hardware", h.ipc_latency, allow_zero=True),
    )
    if hw.gpu <= 0:
        raise r.fail("hardware.gpu", "must be positive")
    return hw


def _policy(r, d) -> Policy:
    if d is None:
        return NixiePolicy()
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "nixie":
        r.obj(d, "policy", ("kind", "mlfq", "planner", "prefetch", "fetch_during_drain"))
        m = r.obj(d.get("mlfq", {}), "policy.mlfq",
                  ("levels", "allot_base", "preempt_base", "idle_threshold", "tick", "preempt_higher"))
        dm = MlfqConfig()
        try:
            mlfq = MlfqConfig(
                levels=r.num(m, "levels", "policy.mlfq", dm.levels, integer=True),
                allot_base=r.num(m, "allot_base", "policy.mlfq", dm.allot_base),
                preempt_base=r.num(m, "preempt_base", "policy.mlfq", dm.preempt_base),
                idle_threshold=r.num(m, "idle_threshold", "policy.mlfq", dm.idle_threshold),
                tick=r.num(m, "tick", "policy.mlfq", dm.tick),
                preempt_higher=_bool(r, m, "preempt_higher", "policy.mlfq", dm.preempt_higher),
            )
        except ValueError as e:
            raise r.fail("policy.mlfq", str(e)) from None
        p = r.obj(d.get("planner", {}), "policy.planner",
                  ("streaming_window", "eviction_policy", "pinned_budget"))
        dp = PlannerConfig()
        try:
            planner = PlannerConfig(
                streaming_window=r.size(p, "streaming_window", "policy.planner", fmt_size(dp.streaming_window)),
                eviction_policy=p.get("eviction_policy", dp.eviction_policy),
                pinned_budget=r.size(p, "pinned_budget", "policy.planner", None, nullable=True),
            )
        except ValueError as e:
            raise r.fail("policy.planner", str(e)) from None
        return NixiePolicy(mlfq, planner,
                           _bool(r, d, "prefetch", "policy", True),
                           _bool(r, d, "fetch_during_drain", "policy", True))
    if kind == "uvm_rr":
        r.obj(d, "policy", ("kind", "window", "uvm", "idle_threshold", "tick"))
        u = r.obj(d.get("uvm", {}), "policy.uvm", ("fault_latency", "prefetch_pages"))
        du = UvmConfig()
        uvm = UvmConfig(
            fault_latency=r.num(u, "fault_latency", "policy.uvm", du.fault_latency, allow_zero=True),
            prefetch_pages=r.num(u, "prefetch_pages", "policy.uvm", du.prefetch_pages,
                                 allow_zero=True, integer=True),
        )
        return UvmRRPolicy(
            window=r.num(d, "window", "policy", 4.0),
            uvm=uvm,
            idle_threshold=r.num(d, "idle_threshold", "policy", 0.1),
            tick=r.num(d, "tick", "policy", 0.01),
        )
    raise r.fail("policy.kind", f"must be 'nixie' or 'uvm_rr', got {kind!r}")


def _bool(r, d, key, path, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise r.fail(f"{path}.{key}", "expected true or false")
    return v


_GEN_FIELDS = {
    "interactive": (Interactive, ("interval", "burst_kernels", "kernel_ms", "jitter")),
    "batch": (Batch, ("kernel_ms", "stream", "sync_every")),
    "llm": (LlmLike, ("prefill_ms", "decode_ms", "tokens", "think_s", "jitter")),
}
_INT_FIELDS = {"burst_kernels", "stream", "sync_every", "tokens"}


def _app(r, d, i, base_dir) -> AppSpec:
    path = f"apps[{i}]"
    r.obj(d, path, ("name", "footprint", "generator", "trace", "start"))
    name = d.get("name")
    if not isinstance(name, str) or not name or any(c.isspace() for c in name):
        raise r.fail(f"{path}.name", "expected a non-empty name without spaces")
    footprint = r.size(d, "footprint", path, None)
    if footprint <= 0:
        raise r.fail(f"{path}.footprint", "must be positive")
    start = r.num(d, "start", path, 0.0, allow_zero=True)
    gen = trace = None
    if ("generator" in d) == ("trace" in d):
        raise r.fail(path, "needs exactly one of 'generator' or 'trace'")
    if "generator" in d:
        g = d["generator"]
        kind = g.get("kind") if isinstance(g, dict) else None
        if kind not in _GEN_FIELDS:
            raise r.fail(f"{path}.generator.kind", f"must be one of {sorted(_GEN_FIELDS)}")
        cls, fields = _GEN_FIELDS[kind]
        r.obj(g, f"{path}.generator", ("kind",) + fields)
        kw = {}
        for f in fields:
            if f in g:
                if g[f] is None:
                    kw[f] = None
                else:
                    kw[f] = r.num(g, f, f"{path}.generator", None, allow_zero=(f == "jitter"),
                                  integer=f in _INT_FIELDS)
        try:
            gen = cls(**kw)
            validate_generator(gen)
        except TypeError as e:
            raise r.fail(f"{path}.generator", f"missing parameter ({e})") from None
        except InvalidSpec as e:
            raise r.fail(f"{path}.generator", str(e)) from None
    else:
        t = d["trace"]
        if isinstance(t, str):
            src = Path(base_dir or ".") / t
            try:
                text = src.read_text()
            except OSError as e:
                raise r.fail(f"{path}.trace", f"cannot read {src}: {e}") from None
        elif isinstance(t, list) and all(isinstance(x, str) for x in t):
            text = "\n".join(f"{name} {x}" for x in t)
        else:
            raise r.fail(f"{path}.trace", "expected a file name or a list of action lines")
        try:
            traces = parse_traces(text)
        except ParseError as e:
            raise r.fail(f"{path}.trace", str(e)) from None
        trace = tuple(traces.get(name, ()))
        if not trace:
            raise r.fail(f"{path}.trace", f"no actions for app {name}")
    return AppSpec(name, footprint, gen, trace, start)


def parse_scenario(text: str, source: str = "<scenario>", base_dir=None) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{source}: {e.msg}", e.lineno, e.colno) from None
    r = _Reader(text)
    r.obj(d, "", ("name", "apps", "hardware", "policy", "seed", "horizon", "warmup"))
    name = d.get("name", Path(source).stem)
    if not isinstance(name, str):
        raise r.fail("name", "expected a string")
    apps_d = d.get("apps")
    if not isinstance(apps_d, list) or not apps_d:
        raise r.fail("apps", "expected a non-empty list")
    apps = tuple(_app(r, a, i, base_dir) for i, a in enumerate(apps_d))
    names = [a.name for a in apps]
    if len(set(names)) != len(names):
        raise r.fail("apps", "app names must be unique")
    hw = _hardware(r, d.get("hardware"))
    for i, a in enumerate(apps):
        if a.footprint > hw.gpu:
            raise r.fail(f"apps[{i}].footprint",
                         f"{fmt_size(a.footprint)} exceeds GPU capacity {fmt_size(hw.gpu)}")
    pol = _policy(r, d.get("policy"))
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise r.fail("seed", "expected an integer")
    horizon = r.num(d, "horizon", "", 60.0)
    warmup = r.num(d, "warmup", "", 0.0, allow_zero=True)
    if warmup >= horizon:
        raise r.fail("warmup", "must be smaller than the horizon")
    return Scenario(name, apps, hw, pol, seed, horizon, warmup)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ParseError(f"cannot read {p}: {e.strerror}") from None
    return parse_scenario(text, str(p), p.parent)


# ---------------------------------------------------------------- dumping
def _link_dict(s: LinkSpec):
    return {"up": fmt_bandwidth(s.up), "down": fmt_bandwidth(s.down), "duplex": s.duplex.value}


def _size_or_none(v):
    return None if v is None else fmt_size(v)


def policy_to_dict(p: Policy) -> dict:
    if isinstance(p, NixiePolicy):
        m = p.mlfq
        return {
            "kind": "nixie",
            "mlfq": {"levels": m.levels, "allot_base": m.allot_base, "preempt_base": m.preempt_base,
                     "idle_threshold": m.idle_threshold, "tick": m.tick,
                     "preempt_higher": m.preempt_higher},
            "planner": {"streaming_window": fmt_size(p.planner.streaming_window),
                        "eviction_policy": p.planner.eviction_policy,
                        "pinned_budget": _size_or_none(p.planner.pinned_budget)},
            "prefetch": p.prefetch,
            "fetch_during_drain": p.fetch_during_drain,
        }
    return {
        "kind": "uvm_rr",
        "window": p.window,
        "uvm": {"fault_latency": p.uvm.fault_latency, "prefetch_pages": p.uvm.prefetch_pages},
        "idle_threshold": p.idle_threshold,
        "tick": p.tick,
    }


def _app_dict(a: AppSpec) -> dict:
    d = {"name": a.name, "footprint": fmt_size(a.footprint), "start": a.start}
    if a.generator is not None:
        g = {"kind": a.generator.kind}
        g.update({k: getattr(a.generator, k) for k in _GEN_FIELDS[a.generator.kind][1]})
        d["generator"] = g
    else:
        d["trace"] = [format_action(a.name, x).split(" ", 1)[1] for x in a.trace]
    return d


def scenario_to_dict(s: Scenario) -> dict:
    hw = s.hardware
    return {
        "name": s.name,
        "seed": s.seed,
        "horizon": s.horizon,
        "warmup": s.warmup,
        "hardware": {
            "gpu": fmt_size(hw.gpu),
            "pinned": fmt_size(hw.pinned),
            "paged": _size_or_none(hw.paged),
            "disk": _size_or_none(hw.disk),
            "links": {"gpu_pinned": _link_dict(hw.gpu_link),
                      "pinned_paged": _link_dict(hw.host_link),
                      "paged_disk": _link_dict(hw.disk_link)},
            "dispatch_overhead": hw.dispatch_overhead,
            "ipc_latency": hw.ipc_latency,
        },
        "policy": policy_to_dict(s.policy),
        "apps": [_app_dict(a) for a in s.apps],
    }


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- variants
def policy_from_token(token: str, scn: Scenario) -> Policy:
    """Policy named on the command line: nixie, nixie_noprefetch or uvm_rr_<W>."""
    base = scn.policy if isinstance(scn.policy, NixiePolicy) else NixiePolicy()
    if token == "nixie":
        return base
    if token == "nixie_noprefetch":
        return replace(base, prefetch=False)
    if token.startswith("uvm_rr_"):
        try:
            w = float(token[len("uvm_rr_"):])
        except ValueError:
            raise ValidationError("policies", f"bad round-robin window in {token!r}") from None
        if w <= 0:
            raise ValidationError("policies", f"bad round-robin window in {token!r}")
        ub = scn.policy if isinstance(scn.policy, UvmRRPolicy) else UvmRRPolicy()
        return replace(ub, window=w)
    if token == "uvm_rr":
        return scn.policy if isinstance(scn.policy, UvmRRPolicy) else UvmRRPolicy()
    raise ValidationError("policies", f"unknown policy {token!r}")


def with_param(scn: Scenario, dotted: str, raw) -> Scenario:
    """Copy of the scenario with one dotted parameter replaced, e.g.
    'policy.planner.pinned_budget' or 'hardware.pinned'."""
    d = scenario_to_dict(scn)
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        if k.startswith("apps[") and k.endswith("]"):
            try:
                cur = cur["apps"][int(k[5:-1])]
            except (ValueError, IndexError):
                raise ValidationError(dotted, "no such app") from None
            continue
        if not isinstance(cur, dict) or k not in cur:
            raise ValidationError(dotted, "unknown parameter")
        cur = cur[k]
    if not isinstance(cur, dict) or keys[-1] not in cur:
        raise ValidationError(dotted, "unknown parameter")
    cur[keys[-1]] = _coerce(raw)
    return parse_scenario(json.dumps(d), scn.name)


def _coerce(raw):
    if not isinstance(raw, str):
        return raw
    low = raw.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("null", "none"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw.strip()
