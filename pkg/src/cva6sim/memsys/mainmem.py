"""Fixed-latency, bandwidth-capped main memory timing model.

A request's data transfer starts once its access latency has elapsed and the
shared data bus is free, and occupies the bus for ceil(bytes / bytes_per_cycle)
cycles. Data itself lives in the caches' shared backing store; this model
only decides *when* things happen.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field


@dataclass(order=True)
class MemTransaction:
    done_cycle: int
    seq: int
    is_write: bool = field(compare=False)
    addr: int = field(compare=False)
    nbytes: int = field(compare=False)
    issue_cycle: int = field(compare=False)
    source: str = field(compare=False, default="")
    cookie: object = field(compare=False, default=None)


class MainMemoryModel:
    def __init__(self, latency_cycles=20, bytes_per_cycle=8, record_trace=True):
        if latency_cycles < 1 or bytes_per_cycle < 1:
            raise ValueError("latency and bandwidth must be positive")
        self.latency = latency_cycles
        self.bytes_per_cycle = bytes_per_cycle
        self.bus_free = 0
        self._queue: list[MemTransaction] = []
        self._seq = 0
        self.bytes_read = 0
        self.bytes_written = 0
        self.record_trace = record_trace
        self.trace: list[MemTransaction] = []

    def transfer_cycles(self, nbytes):
        return -(-nbytes // self.bytes_per_cycle)

    def request(self, is_write, addr, nbytes, issue_cycle, source="", cookie=None):
        """Queue a transfer and return it; ``done_cycle`` is fixed at submission."""
        start = max(issue_cycle + self.latency, self.bus_free)
        done = start + self.transfer_cycles(nbytes)
        self.bus_free = done
        self._seq += 1
        t = MemTransaction(done, self._seq, is_write, addr, nbytes, issue_cycle, source, cookie)
        heapq.heappush(self._queue, t)
        if is_write:
            self.bytes_written += nbytes
        else:
            self.bytes_read += nbytes
        if self.record_trace:
            self.trace.append(t)
        return t

    def tick(self, cycle):
        """Transactions completing at or before ``cycle``, in completion order."""
        out = []
        q = self._queue
        while q and q[0].done_cycle <= cycle:
            out.append(heapq.heappop(q))
        return out

    @property
    def in_flight(self):
        return len(self._queue)

    def next_event(self):
        return self._queue[0].done_cycle if self._queue else None

    def pending_reads(self):
        return [t for t in self._queue if not t.is_write]
