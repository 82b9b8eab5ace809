from __future__ import annotations

from .cache import CacheConfig, CacheState


class ICache:
    """Tag-only blocking instruction cache with a 1-cycle hit.

    Instruction bytes are read from the backing store; the cache only decides
    whether a fetch stalls. One line fill may be outstanding at a time.
    """

    def __init__(self, cfg: CacheConfig, mem):
        self.cfg = cfg
        self.mem = mem
        self.state = CacheState(cfg.sets, cfg.ways, cfg.line_bytes)
        self.line_bytes = cfg.line_bytes
        self.pending_line = None
        self.pending_done = None
        self.hits = 0
        self.misses = 0

    def probe(self, line_addr, cycle):
        """True on hit. On a miss, starts a fill unless one is already pending."""
        line = self.state.find(line_addr)
        if line is not None:
            self.state.touch(line_addr, line)
            self.hits += 1
            return True
        if self.pending_line is None:
            self.misses += 1
            t = self.mem.request(False, line_addr * self.line_bytes, self.line_bytes, cycle, "icache",
                                 cookie=line_addr)
            self.pending_line = line_addr
            self.pending_done = t.done_cycle
        return False

    def contains(self, line_addr):
        return self.state.find(line_addr) is not None

    def on_memory_done(self, t, cycle):
        if t.cookie != self.pending_line:
            return
        line_addr = self.pending_line
        self.pending_line = self.pending_done = None
        victim = self.state.victim(line_addr)
        self.state.evict(line_addr, victim)
        self.state.install(line_addr, victim, None)
