"""Load/store unit: dcache requests, a post-commit store buffer, atomics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..isa import semantics as sem
from ..isa.decode import OpClass
from ..memsys.dcache import MemRequest
from .scoreboard import State

M32 = 0xFFFF_FFFF


@dataclass
class BufferedStore:
    addr: int
    size: int
    data: int
    pc: int


def _overlap(a, asz, b, bsz):
    return a < b + bsz and b < a + asz


class LoadStoreUnit:
    def __init__(self, dcache, output_register=True, store_buffer_depth=4):
        self.dcache = dcache
        self.output_register = output_register
        self.depth = store_buffer_depth
        self.store_buffer: deque[BufferedStore] = deque()
        self.reservation: int | None = None
        self.pending: dict[int, object] = {}     # request id -> scoreboard entry
        self._ids = 0
        self.misaligned = 0
        self.port_cycle = -1

    # -- queries ---------------------------------------------------------------

    def line_crossing(self, addr, size):
        lb = self.dcache.line_bytes
        return addr // lb != (addr + size - 1) // lb

    def quiescent(self):
        return not self.store_buffer and self.dcache.idle and not self.pending

    @property
    def store_buffer_full(self):
        return len(self.store_buffer) >= self.depth

    def _older_store_overlaps(self, addr, size, sb, tag):
        for e in sb:
            if e.tag >= tag:
                break
            if e.inst.opclass in (OpClass.STORE, OpClass.FSTORE) and _overlap(addr, size, e.mem_addr,
                                                                             e.inst.mem_size):
                return True
        return any(_overlap(addr, size, s.addr, s.size) for s in self.store_buffer)

    def _new_id(self):
        self._ids += 1
        return self._ids

    def _ready(self, cycle):
        return cycle + (1 if self.output_register else 0)

    # -- issue side ------------------------------------------------------------

    def start(self, entry, vals, cycle, sb):
        """Begin a load or atomic at issue. Returns a stall cause or None."""
        inst = entry.inst
        addr = entry.mem_addr
        size = inst.mem_size if inst.opclass is not OpClass.AMO else 4
        if inst.opclass is OpClass.AMO:
            return self._start_atomic(entry, vals, addr, cycle)
        if self._older_store_overlaps(addr, size, sb, entry.tag):
            return "raw"
        if self.line_crossing(addr, size):
            if not (self.quiescent() and self.port_cycle != cycle):
                return "dcache"
            self.misaligned += 1
            self.port_cycle = cycle
            raw = self.dcache.functional_read(addr, size)
            entry.result = entry.mem_data = sem.load_extend(inst.mnemonic, raw)
            entry.complete_cycle = self._ready(cycle + self.dcache.cfg.hit_latency)
            entry.mem_outcome = "slow"
            return None
        return self._request(entry, MemRequest(self._new_id(), addr, size, op="load", pc=inst.pc), cycle)

    def _request(self, entry, req, cycle):
        if self.port_cycle == cycle or not self.dcache.access(req, cycle):
            return "dcache"
        if req.addr % req.size:
            self.misaligned += 1
        self.port_cycle = cycle
        entry.mem_request = req
        entry.mem_outcome = req.outcome
        self.pending[req.id] = entry
        return None

    def _start_atomic(self, entry, vals, addr, cycle):
        mn = entry.inst.mnemonic
        if mn == "sc.w" and self.reservation != addr:
            # failed SC: no memory access
            self.reservation = None
            entry.result = 1
            entry.complete_cycle = cycle + 1
            return None
        if self.line_crossing(addr, 4):
            if self.port_cycle == cycle:
                return "dcache"
            self.port_cycle = cycle
            self.misaligned += 1
            old = self.dcache.functional_read(addr, 4)
            self._finish_atomic(entry, vals, addr, old)
            if mn != "lr.w":
                self.dcache.functional_write(addr, 4, entry.mem_data, cycle)
            entry.complete_cycle = self._ready(cycle + self.dcache.cfg.hit_latency)
            entry.mem_outcome = "slow"
            return None
        op = "load" if mn == "lr.w" else mn
        data = vals[1] if len(vals) > 1 else 0
        req = MemRequest(self._new_id(), addr, 4, is_write=mn != "lr.w", data=data, op=op, pc=entry.inst.pc)
        cause = self._request(entry, req, cycle)
        if cause is None:
            if mn == "lr.w":
                self.reservation = addr
            else:
                if mn == "sc.w" or (self.reservation is not None and _overlap(self.reservation, 4, addr, 4)):
                    self.reservation = None
                entry.mem_data = data if mn in ("sc.w",) else None
        return cause

    def _finish_atomic(self, entry, vals, addr, old):
        mn = entry.inst.mnemonic
        if mn == "lr.w":
            entry.result = entry.mem_data = old
            self.reservation = addr
        elif mn == "sc.w":
            entry.result = 0
            entry.mem_data = vals[1]
            self.reservation = None
        else:
            entry.result = old
            entry.mem_data = sem.amo(mn, old, vals[1])
            if self.reservation is not None and _overlap(self.reservation, 4, addr, 4):
                self.reservation = None

    # -- responses -------------------------------------------------------------

    def deliver(self, cycle):
        """Route cache responses to their entries. Returns True if any arrived."""
        got = False
        for resp in self.dcache.pop_responses(cycle):
            entry = self.pending.pop(resp.id, None)
            if entry is None or entry.state is not State.EXECUTING:
                continue      # flushed
            got = True
            inst = entry.inst
            mn = inst.mnemonic
            if inst.opclass is OpClass.AMO:
                if mn == "lr.w":
                    entry.result = entry.mem_data = resp.data
                elif mn == "sc.w":
                    entry.result = 0
                else:
                    entry.result = resp.data
                    entry.mem_data = sem.amo(mn, resp.data, entry.operands[1])
            else:
                entry.result = entry.mem_data = sem.load_extend(mn, resp.data)
            entry.complete_cycle = self._ready(resp.ready_cycle)
        return got

    def forget(self, entries):
        for e in entries:
            req = e.mem_request
            if req is not None:
                self.pending.pop(req.id, None)

    # -- store buffer ----------------------------------------------------------

    def push_store(self, entry):
        if self.store_buffer_full:
            return False
        e = entry
        self.store_buffer.append(BufferedStore(e.mem_addr, e.inst.mem_size, e.mem_data, e.inst.pc))
        if self.reservation is not None and _overlap(self.reservation, 4, e.mem_addr, e.inst.mem_size):
            self.reservation = None
        return True

    def drain(self, cycle):
        """Offer the oldest buffered store to the cache. True if it left the buffer."""
        if not self.store_buffer or self.port_cycle == cycle:
            return False
        s = self.store_buffer[0]
        if self.line_crossing(s.addr, s.size):
            if not self.dcache.idle:
                return False
            self.misaligned += 1
            self.dcache.functional_write(s.addr, s.size, s.data, cycle)
        else:
            if not self.dcache.can_accept(cycle):
                return False
            req = MemRequest(self._new_id(), s.addr, s.size, True, s.data, op="store", pc=s.pc)
            if not self.dcache.access(req, cycle):
                return False
            if s.addr % s.size:
                self.misaligned += 1
        self.port_cycle = cycle
        self.store_buffer.popleft()
        return True

    def drain_functional(self):
        """Commit every buffered store immediately (end of simulation)."""
        while self.store_buffer:
            s = self.store_buffer.popleft()
            self.dcache.functional_write(s.addr, s.size, s.data, timed=False)
