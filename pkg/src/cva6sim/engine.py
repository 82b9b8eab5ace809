"""The cycle loop.

Each ``tick`` walks the pipeline back to front: memory and fills, write-back
and retirement, execute (branch resolution), issue, decode, fetch. Walking in
reverse lets a stage see what the later stages freed up in the same cycle.

Cycles in which nothing can change are skipped in bulk: the loop jumps to the
next cycle where some timer fires and charges the skipped cycles to the same
stall cause. ``SimConfig.event_skip = False`` turns this off; both modes give
identical statistics.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import asdict, dataclass, field, replace

from .core.issue import IssueConfig, IssueContext, arbitrate_wb, resolve_branch, retire, retire_record, try_issue
from .core.lsu import LoadStoreUnit
from .core.scoreboard import FU, ArchRegs, RenameTable, Scoreboard, State
from .frontend.fetch import FetchUnit
from .frontend.predictor import BranchPredictor
from .isa.decode import OpClass
from .isa.memory import SparseMemory
from .isa.reference import ArchState, StepLimitExceeded, Trap, exit_code_from_tohost, step_reference
from .memsys.cache import CacheConfig
from .memsys.dcache import make_dcache
from .memsys.icache import ICache
from .memsys.mainmem import MainMemoryModel

ROI_ADDR = 0x8000_F000
ROI_BEGIN, ROI_END = 1, 2
STALL_CAUSES = ("fetch", "raw", "waw", "structural", "wb_contention", "dcache")
ISSUE_QUEUE_DEPTH = 8

DONE, EXECUTING, WRITTEN_BACK = State.DONE, State.EXECUTING, State.WRITTEN_BACK
STORES = (OpClass.STORE, OpClass.FSTORE)


class Deadlock(Exception):
    def __init__(self, cycle, last_retire):
        self.cycle = cycle
        super().__init__(f"no retirement since cycle {last_retire} (now {cycle})")


class Divergence(Exception):
    def __init__(self, cycle, pc, fld, expected=None, actual=None):
        self.cycle = cycle
        self.pc = pc
        self.field = fld
        self.expected = expected
        self.actual = actual
        super().__init__(f"cosim divergence at cycle {cycle}, pc=0x{pc:08x}: {fld} "
                         f"expected {expected!r}, got {actual!r}")


# -- configuration -------------------------------------------------------------

@dataclass
class SimConfig:
    issue: IssueConfig = field(default_factory=IssueConfig)
    bp_kind: str = "two-level"
    bp_entries: int = 128
    bp_history_bits: int = 3
    btb_entries: int = 64
    dcache: CacheConfig = field(default_factory=CacheConfig)
    icache: CacheConfig = field(default_factory=lambda: CacheConfig(16384, 4, kind="legacy", hit_latency=1))
    mem_latency: int = 20
    mem_bytes_per_cycle: int = 8
    store_buffer_depth: int = 4
    max_cycles: int = 50_000_000
    deadlock_cycles: int = 10_000
    cosim_enabled: bool = False
    trace_enabled: bool = False
    event_skip: bool = True
    preset: str = ""

    def with_dcache(self, **kw):
        return replace(self, dcache=replace(self.dcache, **kw))

    def to_dict(self):
        return asdict(self)


def preset(name) -> SimConfig:
    """Feature matrix of the three core variants."""
    if name == "cva6":
        return SimConfig(IssueConfig(width=1, renaming_enabled=False, alu_alu_forwarding=False, fpu_present=True),
                         bp_kind="bimodal", dcache=CacheConfig(kind="legacy"), preset=name)
    if name == "cva6s":
        return SimConfig(IssueConfig(width=2, renaming_enabled=False, alu_alu_forwarding=False, fpu_present=False),
                         bp_kind="bimodal", dcache=CacheConfig(kind="legacy"), preset=name)
    if name == "cva6s+":
        return SimConfig(IssueConfig(width=2, renaming_enabled=True, alu_alu_forwarding=True, fpu_present=True),
                         bp_kind="two-level", dcache=CacheConfig(kind="hpd"), preset=name)
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("cva6", "cva6s", "cva6s+")


# -- statistics ----------------------------------------------------------------

@dataclass
class Stats:
    cycles: int = 0
    retired: int = 0
    branches: int = 0
    mispredicts: int = 0
    icache_hits: int = 0
    icache_misses: int = 0
    dcache_hits: int = 0
    dcache_misses: int = 0
    mshr_merges: int = 0
    mshr_full: int = 0
    dcache_blocked: int = 0
    prefetches: int = 0
    misaligned: int = 0
    mem_bytes_read: int = 0
    mem_bytes_written: int = 0
    full_issue_cycles: int = 0
    partial_issue_cycles: int = 0
    wb_stall_events: int = 0
    stall_cycles: dict = field(default_factory=lambda: dict.fromkeys(STALL_CAUSES, 0))
    roi: dict | None = None

    @property
    def ipc(self):
        return self.retired / self.cycles if self.cycles else 0.0

    @property
    def roi_cycles(self):
        return self.roi["cycles"] if self.roi else self.cycles

    @property
    def roi_ipc(self):
        if not self.roi:
            return self.ipc
        return self.roi["retired"] / self.roi["cycles"] if self.roi["cycles"] else 0.0

    @property
    def bandwidth_bytes_per_cycle(self):
        if self.roi:
            b, c = self.roi["bytes_read"] + self.roi["bytes_written"], self.roi["cycles"]
        else:
            b, c = self.mem_bytes_read + self.mem_bytes_written, self.cycles
        return b / c if c else 0.0

    def to_dict(self):
        d = asdict(self)
        d["ipc"] = self.ipc
        d["roi_ipc"] = self.roi_ipc
        d["bandwidth_bytes_per_cycle"] = self.bandwidth_bytes_per_cycle
        return d


@dataclass
class RunResult:
    stats: Stats
    exit_code: int | None
    memory: SparseMemory
    arch: ArchRegs
    pc: int
    trace: list = field(default_factory=list)
    cosim_comparisons: int = 0


@dataclass
class _IQEntry:
    inst: object
    pred: object
    ready: int


# -- the simulator -------------------------------------------------------------

class Simulator:
    def __init__(self, cfg: SimConfig, image=None):
        self.cfg = cfg
        self.backing = SparseMemory()
        self.mem = MainMemoryModel(cfg.mem_latency, cfg.mem_bytes_per_cycle, record_trace=cfg.trace_enabled)
        self.icache = ICache(cfg.icache, self.mem)
        self.dcache = make_dcache(cfg.dcache, self.mem, self.backing)
        self.bp = BranchPredictor(cfg.bp_kind, cfg.bp_entries, cfg.bp_history_bits, cfg.btb_entries)
        self.fetch = FetchUnit(self.backing, self.icache, self.bp, fp_enabled=cfg.issue.fpu_present)
        self.lsu = LoadStoreUnit(self.dcache, cfg.issue.lsu_output_register, cfg.store_buffer_depth)
        self.sb = Scoreboard(cfg.issue.scoreboard_depth)
        self.rt = RenameTable()
        self.arch = ArchRegs()
        self.iq: deque[_IQEntry] = deque()
        self.busy_until: dict = {}
        self.stats = Stats()
        self.cycle = 0
        self.next_tag = 0
        self.pc = 0
        self.tohost: int | None = None
        self.exited = False
        self.exit_code: int | None = None
        self.last_retire_cycle = 0
        self.trace: list[str] = []
        self.issue_log: list[tuple] = []
        self.reference: ArchState | None = None
        self.comparisons = 0
        self.drop_wb_pc: int | None = None     # fault-injection hook
        self._roi_begin = None
        self._idle_cause = None
        self._dropped: list = []
        self._ctx = IssueContext(0, self.arch, self.busy_until, self.lsu)
        if image is not None:
            self.load(image)

    def load(self, image):
        image.load_into(self.backing)
        self.pc = image.entry_pc
        self.tohost = image.tohost_addr
        self.fetch.reset(image.entry_pc)
        if self.cfg.cosim_enabled:
            self.reference = ArchState(pc=image.entry_pc, mem=self.backing.copy(),
                                       fp_enabled=self.cfg.issue.fpu_present, tohost=image.tohost_addr)

    # -- per-cycle ------------------------------------------------------------

    def tick(self):
        """Advance one cycle. Returns True if any pipeline state changed."""
        c = self.cycle
        active = False

        # 1. memory, fills, cache responses
        for t in self.mem.tick(c):
            active = True
            if t.source == "icache":
                self.icache.on_memory_done(t, c)
            else:
                self.dcache.on_memory_done(t, c)
        if self.dcache.has_queued_work:
            self.dcache.advance(c)
            active = True
        resp = self.dcache.next_event()
        if resp is not None and resp <= c and self.lsu.deliver(c):
            active = True

        # 2. write-back arbitration, then retirement
        cands = []
        ready = []
        for e in self.sb.entries:
            st = e.state
            if st is DONE:
                cands.append(e)
            elif st is EXECUTING and e.complete_cycle is not None and e.complete_cycle <= c:
                ready.append(e)
        if cands:
            active = True
            winners, losers = arbitrate_wb(cands, self.cfg.issue)
            for e in winners:
                e.state = WRITTEN_BACK
                e.wb_cycle = c
            for e in losers:
                e.events.add("wb_stall")
                self.stats.wb_stall_events += 1
        if self._retire(c):
            active = True
        if self.exited:
            self.stats.stall_cycles["structural"] += 1     # halting: nothing issues this cycle
            self.cycle += 1
            return True

        # 3. execute: completions and branch resolution
        by_tag = self.sb.by_tag
        for e in ready:
            if e.tag not in by_tag:
                continue          # flushed by an older branch this cycle
            active = True
            e.state = DONE if e.inst.dest is not None else WRITTEN_BACK
            if e.inst.is_control:
                res = resolve_branch(e, e.taken, e.target)
                if not res.correct:
                    self._flush(e, res.redirect_pc, c)

        # 4. issue, then let the store buffer use an idle cache port
        issued = self._issue(c)
        if issued:
            active = True
        if self.lsu.store_buffer and self.lsu.drain(c):
            active = True

        # 5. decode
        buf = self.fetch.buffer
        if buf and buf[0].fetch_cycle < c and len(self.iq) + len(buf[0].insts) <= ISSUE_QUEUE_DEPTH:
            pkt = buf.popleft()
            for inst, pred in zip(pkt.insts, pkt.predictions):
                self.iq.append(_IQEntry(inst, pred, c + 1))
            active = True

        # 6. fetch
        misses = self.icache.misses
        redirect = self.fetch._redirect is not None
        if self.fetch.tick(c) is not None or self.icache.misses != misses or redirect:
            active = True

        self.cycle += 1
        return active

    def _issue(self, c):
        width = self.cfg.issue.width
        window = []
        for q in self.iq:
            if q.ready > c or len(window) >= width:
                break
            window.append((q.inst, q.pred))
        ctx = self._ctx
        ctx.cycle, ctx.retired, ctx.next_tag = c, self.stats.retired, self.next_tag
        res = try_issue(window, self.sb, self.rt, self.cfg.issue, ctx) if window else None
        n = len(res.entries) if res else 0
        self.next_tag = ctx.next_tag
        for e in res.entries if res else ():
            self.iq.popleft()
            if self.cfg.trace_enabled:
                self.issue_log.append((c, e.tag, e.inst.pc, e.slot))
        if n == width:
            self.stats.full_issue_cycles += 1
        elif n:
            self.stats.partial_issue_cycles += 1
        else:
            cause = self._stall_cause(res.stall if res else "fetch")
            self.stats.stall_cycles[cause] += 1
            self._idle_cause = cause
        return n

    def _stall_cause(self, cause):
        if cause == "structural" and self.sb.full:
            head = self.sb.head()
            if head.state is State.DONE:
                return "wb_contention"
            if head.fu is FU.LSU and head.state is State.EXECUTING and head.inst.opclass is not OpClass.STORE \
                    and head.inst.opclass is not OpClass.FSTORE:
                return "dcache"
        return cause or "structural"

    def _flush(self, branch, pc, c):
        gone = self.sb.flush_younger(branch.tag)
        self.lsu.forget(gone)
        self.rt.rebuild(self.sb)
        self.iq.clear()
        self.fetch.redirect(pc, branch.tag, c)

    # -- retirement -----------------------------------------------------------

    def _accept(self, e):
        inst = e.inst
        if inst.mnemonic == "illegal":
            self._trap(Trap("illegal_instruction", inst.pc, inst.raw), self.cycle)
        if inst.opclass in STORES:
            if not self.lsu.push_store(e):
                return False
        if self.drop_wb_pc is not None and inst.pc == self.drop_wb_pc and inst.dest is not None:
            self._dropped.append((inst.dest, self.arch.read(*inst.dest)))
            self.drop_wb_pc = None
        return True

    def _retire(self, c):
        head = self.sb.entries[0] if self.sb.entries else None
        if head is None or head.state is not WRITTEN_BACK:
            return False
        self._dropped = []
        done = retire(self.sb, self.rt, self.arch, self.cfg.issue.width, self._accept)
        for dest, old in self._dropped:
            self.arch.write(*dest, old)
        for e in done:
            self._after_retire(e, c)
        if done:
            self.last_retire_cycle = c
        return bool(done)

    def _after_retire(self, e, c):
        inst = e.inst
        st = self.stats
        st.retired += 1
        cls = inst.opclass
        if inst.is_control:
            if cls is OpClass.BRANCH:
                st.branches += 1
            if e.mispredicted:
                st.mispredicts += 1
            self.bp.update(inst, e.taken, e.target)
            self.pc = e.target
        else:
            self.pc = inst.next_pc
        rec = retire_record(e)
        if self.reference is not None:
            self._compare(rec, c)
        if self.cfg.trace_enabled:
            self.trace.append(self._trace_line(e, rec, c))
        if cls in STORES:
            if e.mem_addr == ROI_ADDR:
                self._roi_marker(e.mem_data, c)
            if self.tohost is not None and e.mem_addr == self.tohost:
                self.exited = True
                self.exit_code = exit_code_from_tohost(e.mem_data)
        elif cls is OpClass.SYSTEM and inst.mnemonic in ("ecall", "ebreak"):
            self.exited = True
            self.exit_code = self.arch.x[10]

    def _trace_line(self, e, rec, c):
        raw = f"0x{rec.raw:04x}" if e.inst.size_bytes == 2 else f"0x{rec.raw:08x}"
        rd = "" if rec.rd is None else f"{'f' if rec.rd_is_fp else 'x'}{rec.rd}"
        wb = "" if rec.wb_value is None else f"0x{rec.wb_value:08x}"
        ev = set(e.events)
        if e.mispredicted:
            ev.add("mispredict")
        ev |= {"miss": {"dmiss"}, "hit": {"dhit"}, "merge": {"mshr_merge"}}.get(e.mem_outcome, set())
        return f"{c},0x{rec.pc:08x},{raw},{rec.mnemonic},{rd},{wb},{';'.join(sorted(ev))}"

    def _roi_marker(self, value, c):
        snap = (c, self.stats.retired, self.mem.bytes_read, self.mem.bytes_written)
        if value == ROI_BEGIN:
            self._roi_begin = snap
        elif value == ROI_END and self._roi_begin is not None:
            b = self._roi_begin
            self.stats.roi = {"cycles": snap[0] - b[0], "retired": snap[1] - b[1],
                              "bytes_read": snap[2] - b[2], "bytes_written": snap[3] - b[3]}
            self._roi_begin = None

    # -- co-simulation --------------------------------------------------------

    def _compare(self, rec, c):
        ref = self.reference
        try:
            _, expect = step_reference(ref)
        except Trap as t:
            raise Divergence(c, rec.pc, "trap", t, rec.mnemonic) from None
        self.comparisons += 1
        if expect.key() != rec.key():
            for name in ("pc", "mnemonic", "rd", "rd_is_fp", "wb_value", "mem_addr", "mem_data",
                         "is_branch_taken"):
                if getattr(expect, name) != getattr(rec, name):
                    raise Divergence(c, rec.pc, name, getattr(expect, name), getattr(rec, name))
        if expect.timing_csr and rec.rd is not None:
            ref.x[rec.rd] = rec.wb_value

    def _trap(self, trap, c):
        if self.reference is not None:
            try:
                step_reference(self.reference)
            except Trap as t:
                if t != trap:
                    raise Divergence(c, trap.pc, "trap", t, trap) from None
            else:
                raise Divergence(c, trap.pc, "trap", None, trap)
        raise trap

    def _final_check(self, image):
        ref = self.reference
        if not ref.exited:
            raise Divergence(self.cycle, self.pc, "exit", "running", "exited")
        if ref.pc != self.pc:
            raise Divergence(self.cycle, self.pc, "pc", ref.pc, self.pc)
        if ref.x != self.arch.x:
            i = next(i for i in range(32) if ref.x[i] != self.arch.x[i])
            raise Divergence(self.cycle, self.pc, f"x{i}", ref.x[i], self.arch.x[i])
        if ref.f != self.arch.f:
            i = next(i for i in range(32) if ref.f[i] != self.arch.f[i])
            raise Divergence(self.cycle, self.pc, f"f{i}", ref.f[i], self.arch.f[i])
        if not image.same_contents(ref.mem):
            addr = image.first_difference(ref.mem)
            raise Divergence(self.cycle, self.pc, f"mem[0x{addr:08x}]", ref.mem.read(addr, 1), image.read(addr, 1))

    # -- event skipping -------------------------------------------------------

    def _next_event(self):
        c = self.cycle - 1          # the idle cycle just simulated
        times = [self.mem.next_event(), self.dcache.next_event(), self.fetch.next_event(c)]
        times += [e.complete_cycle for e in self.sb if e.state is State.EXECUTING and e.complete_cycle is not None]
        times += [t for t in self.busy_until.values() if t > c]
        if self.iq:
            times.append(self.iq[0].ready)
        if self.fetch.buffer:
            times.append(self.fetch.buffer[0].fetch_cycle + 1)
        if self.dcache.has_queued_work:
            times.append(c + 1)
        future = [t for t in times if t is not None]
        if not future:
            return None
        return max(min(future), c + 1)

    def _counters(self):
        d = self.dcache.stats
        return self.fetch.stats.stall_cycles, d.blocked, d.mshr_full, self.icache.hits

    def _skip(self, before):
        nxt = self._next_event()
        limit = min(self.cfg.max_cycles, self.last_retire_cycle + self.cfg.deadlock_cycles + 1)
        target = limit if nxt is None else min(nxt, limit)
        n = target - self.cycle
        if n <= 0:
            return
        after = self._counters()
        fs, blk, mf, ih = (a - b for a, b in zip(after, before))
        self.icache.hits += ih * n
        self.fetch.stats.stall_cycles += fs * n
        self.dcache.stats.blocked += blk * n
        self.dcache.stats.mshr_full += mf * n
        self.stats.stall_cycles[self._idle_cause] += n
        self.cycle += n

    # -- driver ---------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        while not self.exited:
            if self.cycle >= cfg.max_cycles:
                raise StepLimitExceeded(self._arch_snapshot())
            if self.cycle - self.last_retire_cycle > cfg.deadlock_cycles:
                raise Deadlock(self.cycle, self.last_retire_cycle)
            before = self._counters() if cfg.event_skip else None
            self._idle_cause = None
            if not self.tick() and cfg.event_skip and self._idle_cause is not None:
                self._skip(before)
        return self._finish()

    def _arch_snapshot(self):
        return ArchState(self.pc, list(self.arch.x), list(self.arch.f), self.backing, self.lsu.reservation,
                         self.stats.retired, self.cfg.issue.fpu_present, self.tohost)

    def _finish(self):
        self.dcache._drain_pending()
        self.lsu.drain_functional()
        image = self.dcache.drain_and_snapshot()
        st = self.stats
        st.cycles = self.cycle
        st.icache_hits = self.icache.hits
        st.icache_misses = self.icache.misses
        d = self.dcache.stats
        st.dcache_hits, st.dcache_misses, st.mshr_merges = d.hits, d.misses, d.mshr_merges
        st.mshr_full, st.dcache_blocked, st.prefetches = d.mshr_full, d.blocked, d.prefetches
        st.misaligned = self.lsu.misaligned
        st.mem_bytes_read, st.mem_bytes_written = self.mem.bytes_read, self.mem.bytes_written
        if self.reference is not None:
            self._final_check(image)
        return RunResult(st, self.exit_code, image, copy.deepcopy(self.arch), self.pc, self.trace, self.comparisons)


def simulate(cfg: SimConfig, image):
    return Simulator(cfg, image).run()


def cosim_check(cfg: SimConfig, image):
    """Run with lock-step checking; returns None when clean, else the Divergence."""
    try:
        Simulator(replace(cfg, cosim_enabled=True), image).run()
    except Divergence as d:
        return d
    except Trap:
        return None
    return None
