"""Latency accounting in abstract cost units."""

from __future__ import annotations

from collections import Counter


class LatencyMeter:
    """Accumulates charged latency per category and per operation count."""

    def __init__(self):
        self.units: Counter = Counter()
        self.ops: Counter = Counter()

    def charge(self, category: str, units, count: int = 1):
        if units < 0:
            raise ValueError("negative latency charge")
        self.units[category] += units
        self.ops[category] += count

    @property
    def total(self):
        return sum(self.units.values())

    def merge(self, other: LatencyMeter):
        self.units.update(other.units)
        self.ops.update(other.ops)

    def __repr__(self):
        return f"LatencyMeter({dict(self.units)})"
