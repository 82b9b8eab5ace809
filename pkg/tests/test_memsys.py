import random
from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cva6sim.isa.memory import SparseMemory
from cva6sim.memsys import (CacheConfig, CacheState, HpdCache, LegacyCache, MainMemoryModel, MemRequest,
                            MshrFull, MshrTable, PrefetcherState, StridePrefetcher, make_dcache,
                            prefetch_step)

LINE = 64
BASE = 0x10_0000


class Rig:
    """A data cache plus memory driven one cycle at a time."""

    def __init__(self, kind="hpd", policy="write-back", **kw):
        self.mm = MainMemoryModel()
        self.backing = SparseMemory()
        self.cache = make_dcache(CacheConfig(kind=kind, policy=policy, **kw), self.mm, self.backing)
        self.cycle = 0
        self.responses = {}
        self._id = 0

    def step(self):
        c = self.cycle
        for t in self.mm.tick(c):
            self.cache.on_memory_done(t, c)
        self.cache.advance(c)
        for r in self.cache.pop_responses(c):
            self.responses[r.id] = (r.ready_cycle, r.data)
        self.cycle += 1

    def offer(self, addr, op="load", size=4, data=0, pc=0):
        """Offer a request this cycle; returns its id or None if refused."""
        self._id += 1
        req = MemRequest(self._id, addr, size, op == "store", data, op=op, pc=pc)
        return req if self.cache.access(req, self.cycle) else None

    def until(self, pred, limit=2000):
        for _ in range(limit):
            if pred():
                return
            self.step()
        raise AssertionError("timed out")

    def warm(self, addr):
        req = self.offer(addr)
        self.until(lambda: req.id in self.responses)
        self.step()


# -- main memory ------------------------------------------------------------------

def test_memory_line_arithmetic():
    mm = MainMemoryModel()
    a = mm.request(False, 0, 64, 0)
    b = mm.request(False, 64, 64, 0)
    assert a.done_cycle == 28 and b.done_cycle == 36
    assert [t.addr for t in mm.tick(35)] == [0] and [t.addr for t in mm.tick(36)] == [64]
    assert mm.tick(1000) == [] and mm.next_event() is None
    assert mm.bytes_read == 128


def test_memory_rejects_bad_params():
    with pytest.raises(ValueError):
        MainMemoryModel(0, 8)


# -- legacy ------------------------------------------------------------------------

def test_legacy_hit_and_miss_latency():
    rig = Rig("legacy")
    req = rig.offer(BASE)
    assert req.outcome == "miss"
    rig.until(lambda: req.id in rig.responses)
    assert rig.responses[req.id][0] == 30            # 2 lookup + 20 + 64/8
    rig.step()
    start = rig.cycle
    hit = rig.offer(BASE + 8)
    rig.until(lambda: hit.id in rig.responses)
    assert hit.outcome == "hit" and rig.responses[hit.id][0] == start + 2


def test_legacy_serializes_misses():
    rig = Rig("legacy")
    first = rig.offer(BASE)
    rig.step()
    assert rig.offer(BASE + LINE) is None             # blocked under the miss
    rig.until(lambda: rig.cache.can_accept(rig.cycle))
    second_at = rig.cycle
    second = rig.offer(BASE + LINE)
    rig.until(lambda: second.id in rig.responses)
    assert second_at >= 30 and rig.responses[second.id][0] == second_at + 30
    assert rig.responses[first.id][0] == 30


def test_legacy_dirty_eviction_writes_back():
    rig = Rig("legacy", size_bytes=512, ways=1)        # 8 sets, direct mapped
    s = rig.offer(BASE, "store", data=0xAB)
    rig.until(lambda: rig.cache.can_accept(rig.cycle))
    other = rig.offer(BASE + 512)                      # same set
    rig.until(lambda: other.id in rig.responses)
    assert rig.cache.stats.writebacks == 1 and rig.backing.read(BASE, 4) == 0xAB and s is not None


# -- hpd ---------------------------------------------------------------------------

def test_hpd_hit_under_miss():
    rig = Rig("hpd")
    rig.warm(BASE + 4 * LINE)
    c0 = rig.cycle
    miss = rig.offer(BASE)
    rig.step()
    hit = rig.offer(BASE + 4 * LINE)
    rig.until(lambda: hit.id in rig.responses)
    assert rig.responses[hit.id][0] == c0 + 3 and miss.id not in rig.responses
    rig.until(lambda: miss.id in rig.responses)
    assert rig.responses[miss.id][0] == c0 + 30


def test_hpd_secondary_miss_merges_into_one_request():
    rig = Rig("hpd")
    a = rig.offer(BASE)
    rig.step()
    b = rig.offer(BASE + 8)
    rig.until(lambda: b.id in rig.responses and a.id in rig.responses)
    assert b.outcome == "merge" and rig.cache.stats.mshr_merges == 1
    assert [t.addr for t in rig.mm.trace if not t.is_write] == [BASE]


def test_hpd_ninth_miss_is_refused():
    rig = Rig("hpd")
    for k in range(8):
        assert rig.offer(BASE + k * LINE) is not None
        rig.step()
    assert rig.offer(BASE + 8 * LINE) is None and rig.cache.stats.mshr_full == 1
    assert len(rig.cache.mshr) == 8


def test_mshr_table_bound():
    t = MshrTable(2)
    t.allocate(1)
    t.allocate(2)
    with pytest.raises(MshrFull):
        t.allocate(3)
    t.release(1)
    t.allocate(3)
    with pytest.raises(AssertionError):
        t.allocate(3)                                  # one entry per line


def test_hpd_one_request_per_port_per_cycle():
    rig = Rig("hpd")
    assert rig.offer(BASE) is not None and rig.offer(BASE + LINE) is None


def test_write_through_forwards_stores_and_does_not_allocate():
    rig = Rig("hpd", policy="write-through")
    assert rig.offer(BASE, "store", data=7) is not None
    assert rig.backing.read(BASE, 4) == 7 and rig.cache.state.find(BASE // LINE) is None
    assert [t.is_write for t in rig.mm.trace] == [True]


# -- prefetcher ----------------------------------------------------------------------

def test_prefetch_walkthrough():
    pf = PrefetcherState()
    assert [prefetch_step(pf, ln) for ln in (10, 11, 12)] == [[], [], []]
    assert prefetch_step(pf, 13) == [14, 15] and pf.confidence == 2


def test_prefetch_filters_cached_lines():
    pf = PrefetcherState()
    for ln in (10, 11, 12):
        prefetch_step(pf, ln)
    assert prefetch_step(pf, 13, wanted=lambda line: line != 14) == [15]


def test_interleaved_streams_train_independently():
    # pcs 32 bytes apart used to share a slot in a direct-mapped table
    pf = StridePrefetcher(degree=1)
    fired = {0x104: [], 0x124: []}
    for k in range(4):
        for pc, base in ((0x104, 100), (0x124, 500)):
            fired[pc].append(pf.on_demand_miss(pc, base + k, lambda line: True))
    assert fired[0x104][3] == [104] and fired[0x124][3] == [504]


def test_stride_table_replaces_least_recent():
    pf = StridePrefetcher(entries=2)
    a = pf.state_for(1)
    pf.state_for(2)
    pf.state_for(1)
    pf.state_for(3)                                   # evicts pc 2
    assert pf.state_for(1) is a and list(pf.table) == [3, 1]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.one_of(st.integers(0, 1 << 20), st.integers(0, 6)), min_size=1, max_size=60))
def test_prefetch_needs_three_equal_strides(lines):
    pf = PrefetcherState()
    seen = []            # a repeated miss to the same line carries no stride information
    for ln in lines:
        fired = bool(prefetch_step(pf, ln))
        if seen and seen[-1] == ln:
            assert not fired
            continue
        seen.append(ln)
        last = seen[-4:]
        d = [b - a for a, b in zip(last, last[1:])]
        assert fired == (len(d) == 3 and d[0] == d[1] == d[2] and ln + d[0] >= 0)


def test_hpd_prefetch_on_sequential_stream():
    rig = Rig("hpd", prefetch=True)
    reqs = []
    for k in range(6):
        r = None
        while r is None:
            r = rig.offer(BASE + k * LINE, pc=0x40)
            rig.step()
        reqs.append(r)
        rig.until(lambda: r.id in rig.responses)
    assert rig.cache.stats.prefetches >= 2
    assert any(t.source == "dcache-prefetch" for t in rig.mm.trace)
    assert any(r.outcome in ("hit", "merge") for r in reqs[3:])


# -- invariants --------------------------------------------------------------------

def _single_fill(trace):
    spans = defaultdict(list)
    for t in trace:
        if not t.is_write and t.nbytes == LINE:
            spans[t.addr].append((t.issue_cycle, t.done_cycle))
    for s in spans.values():
        s.sort()
        assert all(a[1] <= b[0] for a, b in zip(s, s[1:]))


def _fuzz(kind, policy, seed, n=300, prefetch=False):
    rng = random.Random(seed)
    rig = Rig(kind, policy, size_bytes=1024, ways=2, mshr_depth=4, prefetch=prefetch)
    oracle = {}
    pending = {}
    for _ in range(n):
        addr = BASE + rng.randrange(0, 48) * LINE + 4 * rng.randrange(16)
        op = rng.choice(["load", "load", "store"])
        if op == "store":
            # the core performs a store only after every older load has completed
            rig.until(lambda: all(i in rig.responses for i in pending))
        value = rng.getrandbits(32)
        while True:
            req = rig.offer(addr, op, data=value, pc=rng.choice([0x10, 0x20]))
            rig.step()
            if req is not None:
                break
        if op == "store":
            oracle[addr] = value
        else:
            pending[req.id] = oracle.get(addr, 0)
        assert len(getattr(rig.cache, "mshr", ())) <= 4
        rig.cache.state.check_invariants()
    rig.until(lambda: all(i in rig.responses for i in pending))
    for i, want in pending.items():
        assert rig.responses[i][1] == want
    image = rig.cache.drain_and_snapshot()
    for a, v in oracle.items():
        assert image.read(a, 4) == v
    _single_fill(rig.mm.trace)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["legacy", "hpd"]), st.sampled_from(["write-back", "write-through"]),
       st.integers(0, 1 << 30), st.booleans())
def test_loads_see_latest_store(kind, policy, seed, prefetch):
    _fuzz(kind, policy, seed, prefetch=prefetch and kind == "hpd")


def test_drain_without_dirty_lines_is_backing():
    rig = Rig("hpd")
    rig.backing.write(BASE, 4, 5)
    rig.warm(BASE)
    assert rig.cache.drain_and_snapshot().same_contents(rig.backing)


def test_drain_reflects_dirty_line():
    rig = Rig("hpd")
    rig.warm(BASE)
    rig.offer(BASE, "store", data=0x1234)
    assert rig.backing.read(BASE, 4) == 0
    assert rig.cache.drain_and_snapshot().read(BASE, 4) == 0x1234


def test_non_blocking_beats_blocking_on_close_misses():
    done = {}
    for kind in ("legacy", "hpd"):
        rig = Rig(kind)
        reqs = []
        for k in range(4):
            r = None
            while r is None:
                r = rig.offer(BASE + 2 * k * LINE)
                rig.step()
            reqs.append(r)
        rig.until(lambda: all(r.id in rig.responses for r in reqs))
        done[kind] = rig.cycle
    assert done["hpd"] < done["legacy"]


def _lru_access(state, line_addr):
    line = state.find(line_addr)
    if line is None:
        victim = state.victim(line_addr)
        state.evict(line_addr, victim)
        state.install(line_addr, victim, bytearray(LINE))
        return False
    state.touch(line_addr, line)
    return True


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3), st.lists(st.integers(1, 40), min_size=20, max_size=200))
def test_lru_keeps_a_line_touched_within_ways(k, others):
    state = CacheState(sets=4, ways=4, line_bytes=LINE)
    hot = 0
    _lru_access(state, hot)
    for i, o in enumerate(others):
        _lru_access(state, o * 4)                     # all map to set 0
        if i % k == k - 1:
            assert _lru_access(state, hot)
    state.check_invariants()


def test_cache_config_validation():
    with pytest.raises(ValueError):
        CacheConfig(size_bytes=3000)
    with pytest.raises(ValueError):
        CacheConfig(policy="write-around")
    assert CacheConfig().sets == 64 and CacheConfig(16384, 4).sets == 64
    assert isinstance(make_dcache(CacheConfig(kind="legacy"), MainMemoryModel(), SparseMemory()), LegacyCache)
    assert isinstance(make_dcache(CacheConfig(), MainMemoryModel(), SparseMemory()), HpdCache)
