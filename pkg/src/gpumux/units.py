"""Byte and time units plus the tier enumeration shared by every module."""
from __future__ import annotations

import re
from enum import IntEnum

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30

BLOCK_SIZE = 2 * MiB
CHUNK_MAX = 128 * MiB
BLOCKS_PER_CHUNK = CHUNK_MAX // BLOCK_SIZE


class TierId(IntEnum):
    GPU = 0
    PINNED = 1
    PAGED = 2
    DISK = 3

    @property
    def label(self) -> str:
        return _TIER_LABELS[self]


_TIER_LABELS = {
    TierId.GPU: "gpu",
    TierId.PINNED: "pinned",
    TierId.PAGED: "paged",
    TierId.DISK: "disk",
}

TIER_BY_LABEL = {v: k for k, v in _TIER_LABELS.items()}


def blocks_for(size: int) -> int:
    """Number of 2 MiB blocks needed to hold `size` bytes (at least one)."""
    if size <= 0:
        raise ValueError(f"size must be positive, got {size}")
    return -(-size // BLOCK_SIZE)


_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)\s*$")
_SIZE_UNITS = {
    "": 1, "b": 1,
    "kib": KiB, "mib": MiB, "gib": GiB, "tib": 1 << 40,
    "kb": 1000, "mb": 1000 ** 2, "gb": 1000 ** 3, "tb": 1000 ** 4,
}


def parse_size(value) -> int:
    """Parse '24GiB', '512MiB', 2097152 etc. into bytes."""
    if isinstance(value, bool):
        raise ValueError(f"not a size: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            raise ValueError(f"size must be whole bytes: {value!r}")
        return int(value)
    if not isinstance(value, str):
        raise ValueError(f"not a size: {value!r}")
    m = _SIZE_RE.match(value)
    if not m or m.group(2).lower() not in _SIZE_UNITS:
        raise ValueError(f"cannot parse size {value!r}")
    n = float(m.group(1)) * _SIZE_UNITS[m.group(2).lower()]
    if n != int(n):
        raise ValueError(f"size must be whole bytes: {value!r}")
    return int(n)


def parse_bandwidth(value) -> float:
    """Parse '64GiB/s' (or a plain number of bytes per second)."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str) and value.strip().endswith("/s"):
        return float(parse_size(value.strip()[:-2]))
    raise ValueError(f"cannot parse bandwidth {value!r}")


def fmt_size(n: int) -> str:
    for unit, scale in (("GiB", GiB), ("MiB", MiB), ("KiB", KiB)):
        if n % scale == 0 and n >= scale:
            return f"{n // scale}{unit}"
    return str(n)


def fmt_bandwidth(bw: float) -> str:
    if bw == int(bw):
        return fmt_size(int(bw)) + "/s"
    return repr(bw)
