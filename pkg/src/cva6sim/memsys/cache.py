"""Set-associative cache geometry, line state and true-LRU replacement."""

from __future__ import annotations

from dataclasses import dataclass, field


def _pow2(v):
    return v > 0 and v & (v - 1) == 0


@dataclass(frozen=True)
class CacheConfig:
    size_bytes: int = 32768
    ways: int = 8
    line_bytes: int = 64
    policy: str = "write-back"   # or "write-through"
    kind: str = "hpd"            # or "legacy"
    mshr_depth: int = 8
    prefetch: bool = False
    prefetch_degree: int = 2
    hit_latency: int = 2

    def __post_init__(self):
        if not (_pow2(self.size_bytes) and _pow2(self.ways) and _pow2(self.line_bytes)):
            raise ValueError("cache geometry must be powers of two")
        if self.size_bytes % (self.ways * self.line_bytes):
            raise ValueError("size must be divisible by ways * line_bytes")
        if self.policy not in ("write-back", "write-through"):
            raise ValueError(f"unknown write policy {self.policy!r}")
        if self.kind not in ("legacy", "hpd"):
            raise ValueError(f"unknown cache kind {self.kind!r}")
        if self.mshr_depth < 1:
            raise ValueError("mshr depth must be positive")

    @property
    def sets(self):
        return self.size_bytes // (self.ways * self.line_bytes)

    @property
    def write_back(self):
        return self.policy == "write-back"


@dataclass
class Line:
    tag: int = 0
    valid: bool = False
    dirty: bool = False
    lru_rank: int = 0
    data: bytearray | None = None
    prefetched: bool = False   # filled by the prefetcher, no demand use yet


@dataclass
class CacheState:
    """Tag/state arrays: ``sets`` x ``ways`` lines; lru_rank 0 is most recent."""

    sets: int
    ways: int
    line_bytes: int
    lines: list = field(init=False)

    def __post_init__(self):
        self.lines = [[Line(lru_rank=w) for w in range(self.ways)] for _ in range(self.sets)]
        self._where: dict[int, Line] = {}

    def set_index(self, line_addr):
        return line_addr % self.sets

    def find(self, line_addr):
        return self._where.get(line_addr)

    def touch(self, line_addr, line):
        """Promote ``line`` to most-recently used."""
        r = line.lru_rank
        if r == 0:
            return
        for other in self.lines[self.set_index(line_addr)]:
            if other.lru_rank < r:
                other.lru_rank += 1
        line.lru_rank = 0

    def victim(self, line_addr):
        ways = self.lines[self.set_index(line_addr)]
        invalid = [w for w in ways if not w.valid]
        if invalid:
            return max(invalid, key=lambda w: w.lru_rank)
        return max(ways, key=lambda w: w.lru_rank)

    def line_addr_of(self, line, set_idx):
        return line.tag * self.sets + set_idx

    def evict(self, line_addr, line):
        """Invalidate ``line``; returns its old (line_addr, data, dirty) if it was valid."""
        if not line.valid:
            return None
        old_addr = self.line_addr_of(line, self.set_index(line_addr))
        del self._where[old_addr]
        out = (old_addr, line.data, line.dirty)
        line.valid = line.dirty = line.prefetched = False
        line.data = None
        return out

    def install(self, line_addr, line, data, promote=True, prefetched=False):
        line.tag = line_addr // self.sets
        line.valid = True
        line.dirty = False
        line.prefetched = prefetched
        line.data = data
        self._where[line_addr] = line
        if promote:
            self.touch(line_addr, line)

    def valid_lines(self):
        for s, ways in enumerate(self.lines):
            for line in ways:
                if line.valid:
                    yield self.line_addr_of(line, s), line

    def check_invariants(self):
        for ways in self.lines:
            if sorted(w.lru_rank for w in ways) != list(range(self.ways)):
                raise AssertionError("lru ranks are not a permutation")
            for w in ways:
                if w.dirty and not w.valid:
                    raise AssertionError("dirty line is not valid")
