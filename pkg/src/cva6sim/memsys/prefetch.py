"""Stride prefetcher with per-instruction confidence tracking."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass


@dataclass
class PrefetcherState:
    last_miss_line: int | None = None
    stride_lines: int = 0
    confidence: int = 0
    degree: int = 2


def prefetch_step(pf, miss_line, wanted=lambda line: True):
    """Train ``pf`` on a demand miss to ``miss_line`` and return the lines to
    prefetch. ``wanted(line)`` filters lines already cached or pending."""
    last = pf.last_miss_line
    pf.last_miss_line = miss_line
    if last is None:
        return []
    stride = miss_line - last
    if stride == 0:
        return []
    if stride == pf.stride_lines:
        pf.confidence = min(3, pf.confidence + 1)
    else:
        pf.stride_lines = stride
        pf.confidence = 0
    if pf.confidence < 2:
        return []
    out = []
    for k in range(1, pf.degree + 1):
        line = miss_line + k * stride
        if line >= 0 and wanted(line):
            out.append(line)
    return out


class StridePrefetcher:
    """Small fully associative table of stride trackers keyed by the pc of
    the access that missed, so interleaved array streams train independently.
    The least recently trained tracker is replaced when the table is full."""

    def __init__(self, degree=2, entries=16):
        self.degree = degree
        self.entries = entries
        self.table: OrderedDict[int, PrefetcherState] = OrderedDict()
        self.issued = 0

    def state_for(self, pc):
        st = self.table.get(pc)
        if st is None:
            if len(self.table) >= self.entries:
                self.table.popitem(last=False)
            st = self.table[pc] = PrefetcherState(degree=self.degree)
        else:
            self.table.move_to_end(pc)
        return st

    def on_demand_miss(self, pc, line, wanted):
        return prefetch_step(self.state_for(pc), line, wanted)
