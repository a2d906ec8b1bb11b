"""Report emitters (json, csv, text) and the optional event logs."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, Optional

from .units import GiB

FORMATS = ("json", "csv", "text")

LOG_HEADERS = {
    "transfers": ("time", "block", "src", "dst", "direction", "bytes"),
    "faults": ("time", "app", "page", "evicted_bytes", "fetched_bytes", "service_time"),
    "sched": ("time", "app", "event", "level", "t_a", "i_a", "p_a", "q_a"),
}


def _runs(report: dict) -> Dict[str, dict]:
    """Single-run reports map to one run named after the policy."""
    if "runs" in report:
        return report["runs"]
    return {report["policy"]: report}


def _flat(d: dict, prefix=""):
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            yield from _flat(v, f"{prefix}{k}.")
        else:
            yield prefix + k, v


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("run", "scope", "metric", "value"))
    for run, r in _runs(report).items():
        for app in sorted(r["apps"]):
            for k, v in _flat(r["apps"][app]):
                w.writerow((run, app, k, "" if v is None else repr(v) if isinstance(v, float) else v))
        for k, v in _flat(r["global"]):
            w.writerow((run, "global", k, "" if v is None else repr(v) if isinstance(v, float) else v))
    return buf.getvalue()


def _fmt(v, unit=""):
    if v is None:
        return "-"
    if unit == "GiB":
        return f"{v / GiB:.2f}"
    if unit == "GiB/s":
        return f"{v / GiB:.1f}"
    if unit == "ms":
        return f"{v * 1e3:.1f}"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def _table(rows):
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    out = []
    for n, r in enumerate(rows):
        out.append("  ".join(str(c).ljust(widths[i]) if i == 0 else str(c).rjust(widths[i])
                             for i, c in enumerate(r)).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


_GLOBAL_ROWS = (
    ("context switches", "switches", ""),
    ("switch total p50 (ms)", "switch_total_p50", "ms"),
    ("switch total p95 (ms)", "switch_total_p95", "ms"),
    ("switch transfer mean (ms)", "switch_transfer_mean", "ms"),
    ("switch window GiB/s", "switch_window_bidirectional", "GiB/s"),
    ("pinned peak (GiB)", "pinned_peak", "GiB"),
    ("prefetch hits (GiB)", "prefetch_hit_bytes", "GiB"),
    ("fairness (jain)", "fairness_jain", ""),
    ("makespan (s)", "makespan", ""),
)

_APP_ROWS = (
    ("requests", "requests", ""),
    ("ttft mean (ms)", "ttft_mean", "ms"),
    ("ttft p95 (ms)", "ttft_p95", "ms"),
    ("level-1 share", "level1_fraction", ""),
    ("grants", "grants", ""),
    ("norm. throughput", "normalized_throughput", ""),
)


def to_text(report: dict) -> str:
    runs = _runs(report)
    first = next(iter(runs.values()))
    lines = [f"scenario {first['scenario']}  seed {first['seed']}  horizon {first['horizon']}s"
             f"  warmup {first['warmup']}s", ""]
    names = list(runs)
    rows = [["metric"] + names]
    for label, key, unit in _GLOBAL_ROWS:
        rows.append([label] + [_fmt(runs[n]["global"].get(key), unit) for n in names])
    lines.append(_table(rows))
    for app in sorted(first["apps"]):
        lines.append("")
        rows = [[f"app {app}"] + names]
        for label, key, unit in _APP_ROWS:
            rows.append([label] + [_fmt(runs[n]["apps"][app].get(key), unit) for n in names])
        lines.append(_table(rows))
    return "\n".join(lines) + "\n"


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "text":
        return to_text(report)
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(report: dict, fmt: str = "json", path: Optional[str] = None) -> str:
    text = render(report, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def write_log(kind: str, rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_HEADERS[kind])
        for r in rows:
            w.writerow(r)
