"""Data-cache timing models.

``LegacyCache`` blocks on a miss until the fill (and any dirty victim
write-back) completes. ``HpdCache`` is pipelined and non-blocking: misses
allocate MSHR entries, later misses to a pending line merge into the entry,
and hits proceed underneath outstanding misses.

Both keep line data, so a dirty line really is the only up-to-date copy
until it is written back to the shared backing store.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..isa import semantics as sem
from .cache import CacheConfig, CacheState
from .prefetch import StridePrefetcher

M32 = 0xFFFF_FFFF


@dataclass
class MemRequest:
    id: int
    addr: int
    size: int
    is_write: bool = False
    data: int = 0
    issue_cycle: int = 0
    op: str = "load"        # "load", "store" or an AMO mnemonic ("sc.w" = conditional store)
    pc: int = 0
    outcome: str = ""       # "hit", "miss" or "merge" once accepted

    @property
    def needs_response(self):
        return self.op != "store"


@dataclass(order=True)
class MemResponse:
    ready_cycle: int
    id: int
    data: int = field(compare=False, default=0)


@dataclass
class MshrEntry:
    line_addr: int
    issued_to_memory: bool = False
    waiters: list = field(default_factory=list)
    prefetch: bool = False      # allocated by the prefetcher
    demand_seen: bool = False


class MshrFull(Exception):
    pass


class MshrTable:
    def __init__(self, depth=8):
        self.depth = depth
        self.entries: dict[int, MshrEntry] = {}
        self.peak = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, line_addr):
        return line_addr in self.entries

    @property
    def full(self):
        return len(self.entries) >= self.depth

    def get(self, line_addr):
        return self.entries.get(line_addr)

    def allocate(self, line_addr, prefetch=False):
        if line_addr in self.entries:
            raise AssertionError("duplicate MSHR entry")
        if self.full:
            raise MshrFull(line_addr)
        e = self.entries[line_addr] = MshrEntry(line_addr, prefetch=prefetch)
        self.peak = max(self.peak, len(self.entries))
        return e

    def release(self, line_addr):
        return self.entries.pop(line_addr)


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    mshr_merges: int = 0
    mshr_full: int = 0
    blocked: int = 0
    writebacks: int = 0
    prefetches: int = 0
    prefetch_hits: int = 0


class DataCacheBase:
    kind = "base"

    def __init__(self, cfg: CacheConfig, mem, backing):
        self.cfg = cfg
        self.mem = mem
        self.backing = backing
        self.state = CacheState(cfg.sets, cfg.ways, cfg.line_bytes)
        self.stats = CacheStats()
        self._responses: list[MemResponse] = []
        self._port_cycle = -1
        self.line_bytes = cfg.line_bytes

    # -- helpers --------------------------------------------------------------

    def line_of(self, addr):
        return addr // self.line_bytes

    def _read_line(self, line_addr):
        return bytearray(self.backing.read_bytes(line_addr * self.line_bytes, self.line_bytes))

    def _respond(self, req, data, cycle):
        heapq.heappush(self._responses, MemResponse(cycle, req.id, data))

    def _write_through(self, addr, size, value, cycle):
        self.backing.write(addr, size, value)
        self.mem.request(True, addr, size, cycle, "dcache")

    def _perform(self, req, line, cycle):
        """Apply ``req`` to resident ``line``; returns the response data."""
        off = req.addr - self.line_of(req.addr) * self.line_bytes
        data = line.data
        if req.op == "load":
            return int.from_bytes(data[off:off + req.size], "little")
        if req.op == "store":
            value = req.data
        else:
            old = int.from_bytes(data[off:off + 4], "little")
            value = req.data if req.op in ("sc.w", "amoswap.w") else sem.amo(req.op, old, req.data)
        size = req.size
        data[off:off + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
        if self.cfg.write_back:
            line.dirty = True
        else:
            self._write_through(req.addr, size, value, cycle)
        return None if req.op == "store" else (0 if req.op == "sc.w" else old)

    def _evict_for(self, line_addr, cycle):
        """Pick and evict the victim way for ``line_addr``, writing back dirty data."""
        victim = self.state.victim(line_addr)
        old = self.state.evict(line_addr, victim)
        done = None
        if old is not None and old[2]:
            old_addr, data, _ = old
            self.backing.write_bytes(old_addr * self.line_bytes, data)
            done = self.mem.request(True, old_addr * self.line_bytes, self.line_bytes, cycle, "dcache").done_cycle
            self.stats.writebacks += 1
        return victim, done

    # -- common interface -----------------------------------------------------

    def pop_responses(self, cycle):
        out = []
        r = self._responses
        while r and r[0].ready_cycle <= cycle:
            out.append(heapq.heappop(r))
        return out

    def next_event(self):
        return self._responses[0].ready_cycle if self._responses else None

    def functional_read(self, addr, size):
        """Coherent read used for line-crossing accesses and final checks."""
        out = bytearray()
        for i in range(size):
            a = (addr + i) & M32
            line = self.state.find(self.line_of(a))
            if line is not None:
                out.append(line.data[a % self.line_bytes])
            else:
                out.append(self.backing.read(a, 1))
        return int.from_bytes(out, "little")

    def functional_write(self, addr, size, value, cycle=0, timed=True):
        to_memory = False
        for i in range(size):
            a = (addr + i) & M32
            b = (value >> (8 * i)) & 0xFF
            line = self.state.find(self.line_of(a))
            if line is not None:
                line.data[a % self.line_bytes] = b
                if self.cfg.write_back:
                    line.dirty = True
                    continue
            self.backing.write(a, 1, b)
            to_memory = True
        if timed and to_memory:
            self.mem.request(True, addr, size, cycle, "dcache")

    def flush_dirty(self):
        for line_addr, line in self.state.valid_lines():
            if line.dirty:
                self.backing.write_bytes(line_addr * self.line_bytes, line.data)
                line.dirty = False

    def drain_and_snapshot(self):
        """Complete outstanding work functionally, write back every dirty line
        and return a copy of the resulting memory image."""
        self._drain_pending()
        self.flush_dirty()
        return self.backing.copy()

    def _drain_pending(self):
        raise NotImplementedError

    @property
    def idle(self):
        raise NotImplementedError


class LegacyCache(DataCacheBase):
    """Blocking write-back cache: one outstanding miss, nothing accepted under it."""

    kind = "legacy"

    def __init__(self, cfg, mem, backing):
        super().__init__(cfg, mem, backing)
        self.blocked_until = -1
        self._pending = None    # (line_addr, victim line, req, done_cycle)

    @property
    def idle(self):
        return self._pending is None

    def can_accept(self, cycle):
        return self._port_cycle != cycle and cycle >= self.blocked_until and self._pending is None

    def access(self, req, cycle):
        """Offer ``req`` in ``cycle``. Returns False when the cache refuses it."""
        if not self.can_accept(cycle):
            if self._pending is not None:
                self.stats.blocked += 1
            return False
        self._port_cycle = cycle
        req.issue_cycle = cycle
        line_addr = self.line_of(req.addr)
        line = self.state.find(line_addr)
        if line is not None:
            self.stats.hits += 1
            req.outcome = "hit"
            self.state.touch(line_addr, line)
            data = self._perform(req, line, cycle)
            if req.needs_response:
                self._respond(req, data, cycle + self.cfg.hit_latency)
            return True
        self.stats.misses += 1
        req.outcome = "miss"
        if req.op == "store" and not self.cfg.write_back:
            self._write_through(req.addr, req.size, req.data, cycle + self.cfg.hit_latency)
            return True
        lookup_done = cycle + self.cfg.hit_latency
        victim, wb_done = self._evict_for(line_addr, lookup_done)
        t = self.mem.request(False, line_addr * self.line_bytes, self.line_bytes, lookup_done, "dcache",
                             cookie=line_addr)
        self._pending = (line_addr, victim, req, t.done_cycle)
        self.blocked_until = max(t.done_cycle, wb_done or 0)
        return True

    def on_memory_done(self, t, cycle):
        if t.is_write or self._pending is None or t.cookie != self._pending[0]:
            return
        line_addr, victim, req, _ = self._pending
        self._pending = None
        self.state.install(line_addr, victim, self._read_line(line_addr))
        data = self._perform(req, victim, cycle)
        if req.needs_response:
            self._respond(req, data, cycle)

    def advance(self, cycle):
        pass

    @property
    def has_queued_work(self):
        return False

    def _drain_pending(self):
        if self._pending is not None:
            line_addr, victim, req, done = self._pending
            self._pending = None
            self.state.install(line_addr, victim, self._read_line(line_addr))
            self._perform(req, victim, done)


class HpdCache(DataCacheBase):
    """Non-blocking pipelined cache with an MSHR table and optional prefetcher."""

    kind = "hpd"

    def __init__(self, cfg, mem, backing):
        super().__init__(cfg, mem, backing)
        self.mshr = MshrTable(cfg.mshr_depth)
        self.prefetcher = StridePrefetcher(cfg.prefetch_degree) if cfg.prefetch else None
        self._pf_queue: list[int] = []
        self._pf_port_cycle = -1

    @property
    def idle(self):
        return not self.mshr.entries and not self._pf_queue

    def can_accept(self, cycle):
        return self._port_cycle != cycle

    def access(self, req, cycle):
        if self._port_cycle == cycle:
            return False
        line_addr = self.line_of(req.addr)
        line = self.state.find(line_addr)
        hit_at = cycle + self.cfg.hit_latency
        if line is not None:
            self._port_cycle = cycle
            req.issue_cycle = cycle
            self.stats.hits += 1
            req.outcome = "hit"
            if line.prefetched:
                line.prefetched = False
                self.stats.prefetch_hits += 1
                self._train(req, line_addr)
            self.state.touch(line_addr, line)
            data = self._perform(req, line, cycle)
            if req.needs_response:
                self._respond(req, data, hit_at)
            return True
        entry = self.mshr.get(line_addr)
        if entry is not None:
            self._port_cycle = cycle
            req.issue_cycle = cycle
            if req.op == "store" and not self.cfg.write_back:
                self._write_through(req.addr, req.size, req.data, hit_at)
            else:
                entry.waiters.append(req)
            self.stats.mshr_merges += 1
            req.outcome = "merge"
            if entry.prefetch and not entry.demand_seen:
                entry.demand_seen = True
                self._train(req, line_addr)
            return True
        if req.op == "store" and not self.cfg.write_back:
            self._port_cycle = cycle
            req.issue_cycle = cycle
            self.stats.misses += 1
            req.outcome = "miss"
            self._write_through(req.addr, req.size, req.data, hit_at)
            return True
        if self.mshr.full:
            self.stats.mshr_full += 1
            return False
        self._port_cycle = cycle
        req.issue_cycle = cycle
        self.stats.misses += 1
        req.outcome = "miss"
        entry = self.mshr.allocate(line_addr)
        entry.demand_seen = True
        entry.waiters.append(req)
        self.mem.request(False, line_addr * self.line_bytes, self.line_bytes, hit_at, "dcache", cookie=line_addr)
        entry.issued_to_memory = True
        self._train(req, line_addr)
        return True

    def _train(self, req, line_addr):
        if self.prefetcher is None:
            return
        lines = self.prefetcher.on_demand_miss(req.pc, line_addr, self._prefetch_wanted)
        for ln in lines:
            if ln not in self._pf_queue:
                self._pf_queue.append(ln)

    def _prefetch_wanted(self, line_addr):
        return self.state.find(line_addr) is None and line_addr not in self.mshr

    def advance(self, cycle):
        """Prefetch port: at most one prefetch enters the pipeline per cycle."""
        while self._pf_queue and self._pf_port_cycle != cycle:
            ln = self._pf_queue.pop(0)
            if not self._prefetch_wanted(ln):
                continue
            if self.mshr.full:
                continue   # dropped under MSHR pressure
            self._pf_port_cycle = cycle
            e = self.mshr.allocate(ln, prefetch=True)
            self.mem.request(False, ln * self.line_bytes, self.line_bytes, cycle + self.cfg.hit_latency,
                             "dcache-prefetch", cookie=ln)
            e.issued_to_memory = True
            self.stats.prefetches += 1

    def on_memory_done(self, t, cycle):
        if t.is_write:
            return
        line_addr = t.cookie
        entry = self.mshr.get(line_addr)
        if entry is None:
            return
        self.mshr.release(line_addr)
        self._fill(entry, cycle)

    def _fill(self, entry, cycle, respond=True):
        line_addr = entry.line_addr
        victim, _ = self._evict_for(line_addr, cycle)
        demand = bool(entry.waiters) or entry.demand_seen
        self.state.install(line_addr, victim, self._read_line(line_addr), promote=demand,
                           prefetched=not demand)
        for req in entry.waiters:
            data = self._perform(req, victim, cycle)
            if respond and req.needs_response:
                self._respond(req, data, cycle)

    @property
    def has_queued_work(self):
        return bool(self._pf_queue)

    def _drain_pending(self):
        for line_addr in list(self.mshr.entries):
            self._fill(self.mshr.release(line_addr), 0, respond=False)
        self._pf_queue.clear()


def make_dcache(cfg, mem, backing):
    return (HpdCache if cfg.kind == "hpd" else LegacyCache)(cfg, mem, backing)
