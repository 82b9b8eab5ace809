"""Dual-issue rules, operand forwarding, write-back arbitration and retirement."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..isa import semantics as sem
from ..isa.decode import F, OpClass
from ..isa.reference import RetireRecord, csr_read
from .scoreboard import FU, WB_PORT, RenameTable, Scoreboard, ScoreboardEntry, State

M32 = 0xFFFF_FFFF

SLOT1_CLASSES = frozenset({OpClass.ALU, OpClass.BRANCH})
SERIALIZED = frozenset({OpClass.CSR, OpClass.SYSTEM, OpClass.AMO})
MEMORY = frozenset({OpClass.LOAD, OpClass.FLOAD, OpClass.STORE, OpClass.FSTORE, OpClass.AMO})
UNPIPELINED = frozenset({FU.DIV, "fdiv"})


class StructuralHazard(Exception):
    def __init__(self, fu, busy_until):
        self.fu = fu
        self.busy_until = busy_until
        super().__init__(f"{fu} busy until cycle {busy_until}")


@dataclass
class IssueConfig:
    width: int = 2
    renaming_enabled: bool = True
    alu_alu_forwarding: bool = True
    fpu_present: bool = True
    lsu_output_register: bool = True
    scoreboard_depth: int = 8
    max_unresolved_branches: int = 2
    latencies: dict = field(default_factory=lambda: {
        "alu": 1, "branch": 1, "mul": 2, "div": 21, "fpu_add": 3, "fpu_div": 11})

    def __post_init__(self):
        if self.width not in (1, 2):
            raise ValueError("issue width must be 1 or 2")
        if self.scoreboard_depth < 1 or self.max_unresolved_branches < 1:
            raise ValueError("scoreboard depth and branch window must be positive")
        for k, v in self.latencies.items():
            if v < 1:
                raise ValueError(f"latency {k} must be >= 1")


_CLASS_FU = {OpClass.MUL: FU.MUL, OpClass.DIV: FU.DIV, OpClass.FPU: FU.FPU}
_RESOLVED = (State.DONE, State.WRITTEN_BACK)


def functional_unit(inst, slot):
    cls = inst.opclass
    if slot == 1:
        return FU.ALU1
    if cls in (OpClass.BRANCH, OpClass.JUMP):
        return FU.BRANCH_UNIT
    if cls in MEMORY:
        return FU.LSU
    return _CLASS_FU.get(cls, FU.ALU0)


# -- forwarding ----------------------------------------------------------------

def forward_operand(src, sb: Scoreboard, rt: RenameTable, arch):
    """Value of register ``src = (file, idx)`` or the tag it must wait on.

    Returns ``("value", v)`` or ``("wait", tag)``.
    """
    tag = rt.lookup(*src)
    if tag is None:
        return "value", arch.read(*src)
    e = sb.get(tag)
    if e is not None and e.has_result:
        return "value", e.result
    return "wait", tag


# -- execution scheduling ------------------------------------------------------

def _unit_key(entry):
    if entry.fu is FU.FPU and entry.inst.mnemonic == "fdiv.s":
        return "fdiv"
    return entry.fu


def latency(entry, cfg):
    lat = cfg.latencies
    fu = entry.fu
    if fu is FU.MUL:
        return lat["mul"]
    if fu is FU.DIV:
        return lat["div"]
    if fu is FU.FPU:
        return lat["fpu_div"] if entry.inst.mnemonic == "fdiv.s" else lat["fpu_add"]
    if fu is FU.BRANCH_UNIT or entry.inst.is_control:
        return lat["branch"]
    return lat["alu"]


def schedule_execution(entry, cfg, cycle, busy_until=None):
    """Completion cycle for a non-memory entry issued in ``cycle``.

    ``busy_until`` maps unpipelined units to the first cycle they are free;
    it is updated in place.
    """
    busy_until = {} if busy_until is None else busy_until
    key = _unit_key(entry)
    lat = latency(entry, cfg)
    if key in UNPIPELINED:
        free = busy_until.get(key, 0)
        if cycle < free:
            raise StructuralHazard(key, free)
        busy_until[key] = cycle + lat
    return cycle + lat


# -- write-back ----------------------------------------------------------------

def arbitrate_wb(candidates, cfg=None):
    """Oldest candidate per WB port wins; returns ``(winners, losers)``."""
    best = {}
    for e in candidates:
        if e.state is not State.DONE:
            raise ValueError("write-back candidate must be done")
        port = WB_PORT[e.fu]
        cur = best.get(port)
        if cur is None or e.tag < cur.tag:
            best[port] = e
    winners = sorted(best.values(), key=lambda e: e.tag)
    won = {id(e) for e in winners}
    losers = [e for e in candidates if id(e) not in won]
    return winners, losers


# -- branch resolution ---------------------------------------------------------

@dataclass(frozen=True)
class Resolution:
    correct: bool
    redirect_pc: int | None = None


def resolve_branch(entry, actual_taken, actual_target):
    pred = entry.prediction
    inst = entry.inst
    entry.taken = actual_taken
    entry.target = actual_target
    fallthrough = inst.next_pc
    if pred.taken == actual_taken and (not actual_taken or pred.target == actual_target):
        return Resolution(True)
    entry.mispredicted = True
    return Resolution(False, actual_target if actual_taken else fallthrough)


# -- issue ---------------------------------------------------------------------

@dataclass
class IssueContext:
    """Per-cycle state the issue rules consult beyond scoreboard and renaming."""

    cycle: int
    arch: object
    busy_until: dict
    lsu: object = None
    retired: int = 0
    next_tag: int = 0

    def take_tag(self):
        t = self.next_tag
        self.next_tag += 1
        return t


@dataclass
class IssueResult:
    entries: list
    stall: str | None = None     # blocking cause of the first instruction not issued


def _unresolved(sb):
    n = 0
    for e in sb.entries:
        if e.inst.is_control and e.state not in _RESOLVED:
            n += 1
    return n


def _wait_cause(sb, tag):
    p = sb.get(tag)
    if p is not None and p.fu is FU.LSU and p.mem_outcome in ("miss", "merge"):
        return "dcache"
    return "raw"


def _execute(entry, vals, ctx):
    """Compute a non-memory result at issue; operands are all resolved."""
    inst = entry.inst
    cls = inst.opclass
    a = vals[0] if vals else 0
    b = vals[1] if len(vals) > 1 else 0
    if cls in (OpClass.ALU, OpClass.MUL, OpClass.DIV):
        entry.result = sem.alu(inst.mnemonic, a, b, inst.imm, inst.pc)
    elif cls is OpClass.BRANCH:
        taken = sem.branch_taken(inst.mnemonic, a, b)
        entry.taken = taken
        entry.target = (inst.pc + inst.imm) & M32 if taken else inst.next_pc
    elif cls is OpClass.JUMP:
        _, entry.target, entry.result = sem.control_target(inst, a)
        entry.taken = True
    elif cls is OpClass.FPU:
        entry.result = sem.fpu(inst.mnemonic, a, b, inst.rm)
    elif cls is OpClass.CSR:
        entry.result = csr_read(inst.imm, ctx.retired, ctx.cycle)
        entry.timing_csr = inst.imm in (sem.CSR_CYCLE, sem.CSR_CYCLEH, sem.CSR_TIME, sem.CSR_TIMEH)
    elif cls in (OpClass.STORE, OpClass.FSTORE):
        entry.mem_addr = (a + inst.imm) & M32
        entry.mem_data = b & ((1 << (8 * inst.mem_size)) - 1)
    if inst.dest is None:
        entry.result = None


def try_issue(window, sb: Scoreboard, rt: RenameTable, cfg: IssueConfig, ctx: IssueContext):
    """Issue up to ``cfg.width`` instructions from the head of ``window``.

    ``window`` holds ``(inst, prediction)`` pairs in program order. Returns an
    IssueResult with the new scoreboard entries.
    """
    issued: list[ScoreboardEntry] = []
    for slot, (inst, pred) in enumerate(window[:cfg.width]):
        cause = _try_one(inst, pred, slot, issued, sb, rt, cfg, ctx)
        if isinstance(cause, str):
            return IssueResult(issued, cause if not issued else None)
    return IssueResult(issued)


def _try_one(inst, pred, slot, issued, sb, rt, cfg, ctx):
    cls = inst.opclass
    if slot == 1 and (cls not in SLOT1_CLASSES or not issued):
        return "structural"
    if len(sb.entries) >= sb.depth:
        return "structural"
    if cls in SERIALIZED and (len(sb) or (ctx.lsu is not None and not ctx.lsu.quiescent())):
        return "structural"
    if inst.is_control and _unresolved(sb) >= cfg.max_unresolved_branches:
        return "structural"

    vals = []
    by_tag = sb.by_tag
    for file, idx in inst.srcs:
        if file == F:
            tag = rt.fp_latest[idx]
            v = ctx.arch.f[idx]
        else:
            tag = rt.int_latest[idx] if idx else None
            v = ctx.arch.x[idx] if idx else 0
        if tag is not None:
            e = by_tag.get(tag)
            if e is not None and e.state in _RESOLVED:
                v = e.result
            else:
                producer = issued[0] if issued else None
                if (slot == 1 and producer is not None and producer.tag == tag and cfg.alu_alu_forwarding
                        and producer.inst.opclass is OpClass.ALU):
                    v = producer.result
                else:
                    return _wait_cause(sb, tag)
        vals.append(v)

    if inst.dest is not None and not cfg.renaming_enabled and rt.lookup(*inst.dest) is not None:
        return "waw"

    entry = ScoreboardEntry(tag=ctx.next_tag, inst=inst, fu=functional_unit(inst, slot),
                            issue_cycle=ctx.cycle, slot=slot, prediction=pred, operands=tuple(vals))
    if cls in (OpClass.LOAD, OpClass.FLOAD, OpClass.AMO):
        entry.mem_addr = (vals[0] + inst.imm) & M32
        cause = ctx.lsu.start(entry, vals, ctx.cycle, sb)
        if cause:
            return cause
    else:
        try:
            entry.complete_cycle = schedule_execution(entry, cfg, ctx.cycle, ctx.busy_until)
        except StructuralHazard:
            return "structural"
        _execute(entry, vals, ctx)
    ctx.take_tag()
    entry.state = State.EXECUTING
    sb.add(entry)
    if inst.dest is not None:
        rt.assign(*inst.dest, entry.tag)
    issued.append(entry)
    return entry


# -- retirement ----------------------------------------------------------------

def retire_record(entry):
    inst = entry.inst
    rd = rd_fp = None
    wb = None
    if inst.dest is not None:
        file, rd = inst.dest
        rd_fp = file == F
        wb = entry.result
    taken = None
    if inst.opclass is OpClass.BRANCH:
        taken = entry.taken
    elif inst.opclass is OpClass.JUMP:
        taken = True
    return RetireRecord(inst.pc, inst.mnemonic, rd, wb, entry.mem_addr, entry.mem_data, taken,
                        bool(rd_fp), inst.raw, entry.timing_csr)


def retire(sb: Scoreboard, rt: RenameTable, arch, width, accept=None):
    """Retire written-back head entries in order, at most ``width``.

    ``accept(entry)`` may veto an entry (e.g. a full store buffer); retirement
    stops at the first veto. Returns the retired entries.
    """
    out = []
    while len(out) < width:
        e = sb.head()
        if e is None or e.state is not State.WRITTEN_BACK:
            break
        if accept is not None and not accept(e):
            break
        sb.pop_head()
        if e.inst.dest is not None:
            arch.write(*e.inst.dest, e.result)
            rt.release(*e.inst.dest, e.tag)
        out.append(e)
        if e.inst.opclass is OpClass.SYSTEM and e.inst.mnemonic in ("ecall", "ebreak", "illegal"):
            break
    return out
