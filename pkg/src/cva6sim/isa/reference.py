"""Cycle-agnostic golden interpreter.

``step_reference`` applies exactly one instruction's architectural effects
and is the oracle the timing pipeline is lock-step compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import semantics as sem
from .decode import F, IllegalInstruction, OpClass, decode_word
from .memory import SparseMemory

M32 = 0xFFFF_FFFF


class Trap(Exception):
    def __init__(self, cause, pc, tval=0):
        self.cause = cause
        self.pc = pc
        self.tval = tval
        super().__init__(f"{cause} at pc=0x{pc:08x} (tval=0x{tval:x})")

    def __eq__(self, other):
        return isinstance(other, Trap) and (self.cause, self.pc, self.tval) == (other.cause, other.pc, other.tval)

    __hash__ = Exception.__hash__


class StepLimitExceeded(Exception):
    def __init__(self, state, records=None):
        self.state = state
        self.records = records
        super().__init__(f"step limit exceeded at pc=0x{state.pc:08x} after {state.retired} instructions")


@dataclass
class ArchState:
    pc: int = 0
    x: list = field(default_factory=lambda: [0] * 32)
    f: list = field(default_factory=lambda: [0] * 32)
    mem: SparseMemory = field(default_factory=SparseMemory)
    reservation: int | None = None
    retired: int = 0
    fp_enabled: bool = True
    tohost: int | None = None
    exited: bool = False
    exit_code: int | None = None

    def copy(self):
        return ArchState(self.pc, list(self.x), list(self.f), self.mem.copy(), self.reservation,
                         self.retired, self.fp_enabled, self.tohost, self.exited, self.exit_code)

    def same_registers(self, other):
        return self.pc == other.pc and self.x == other.x and self.f == other.f


@dataclass(frozen=True)
class RetireRecord:
    pc: int
    mnemonic: str
    rd: int | None = None
    wb_value: int | None = None
    mem_addr: int | None = None
    mem_data: int | None = None
    is_branch_taken: bool | None = None
    rd_is_fp: bool = False
    raw: int = 0
    # counter CSR whose value depends on timing (cycle/time); excluded from value checks
    timing_csr: bool = False

    def key(self):
        """Fields compared in lock-step checking."""
        wb = None if self.timing_csr else self.wb_value
        return (self.pc, self.mnemonic, self.rd, self.rd_is_fp, wb, self.mem_addr, self.mem_data,
                self.is_branch_taken)


def fetch_decode(state):
    pc = state.pc
    if pc & 1:
        raise Trap("misaligned_fetch", pc, pc)
    low = state.mem.read(pc, 2)
    word = low if low & 3 != 3 else state.mem.read(pc, 4)
    try:
        return decode_word(word, pc, state.fp_enabled)
    except IllegalInstruction as e:
        raise Trap("illegal_instruction", pc, e.raw) from None


def reservation_hit(reservation, addr, size):
    return reservation is not None and addr < reservation + 4 and reservation < addr + size


def csr_read(csr, instret, cycle):
    if csr in (sem.CSR_CYCLE, sem.CSR_TIME):
        return cycle & M32
    if csr in (sem.CSR_CYCLEH, sem.CSR_TIMEH):
        return (cycle >> 32) & M32
    if csr == sem.CSR_INSTRET:
        return instret & M32
    if csr == sem.CSR_INSTRETH:
        return (instret >> 32) & M32
    return 0


def exit_code_from_tohost(value):
    return value >> 1 if value & 1 else value


def step_reference(state):
    """Execute one instruction in place; returns ``(state, RetireRecord)``."""
    if state.exited:
        raise RuntimeError("simulation already exited")
    inst = fetch_decode(state)
    x, f, mem = state.x, state.f, state.mem
    mn = inst.mnemonic
    cls = inst.opclass
    pc = inst.pc
    next_pc = inst.next_pc

    def src(i):
        file, idx = inst.srcs[i]
        return f[idx] if file == F else x[idx]

    wb = None
    mem_addr = mem_data = None
    taken = None
    timing_csr = False

    if cls in (OpClass.ALU, OpClass.MUL, OpClass.DIV):
        a = src(0) if inst.srcs else 0
        b = src(1) if len(inst.srcs) > 1 else 0
        wb = sem.alu(mn, a, b, inst.imm, pc)
    elif cls == OpClass.BRANCH:
        taken = sem.branch_taken(mn, src(0), src(1))
        if taken:
            next_pc = (pc + inst.imm) & M32
    elif cls == OpClass.JUMP:
        _, next_pc, wb = sem.control_target(inst, src(0) if inst.srcs else 0)
        taken = True
    elif cls in (OpClass.LOAD, OpClass.FLOAD):
        mem_addr = (src(0) + inst.imm) & M32
        wb = mem_data = sem.load_extend(mn, mem.read(mem_addr, inst.mem_size))
    elif cls in (OpClass.STORE, OpClass.FSTORE):
        mem_addr = (src(0) + inst.imm) & M32
        size = inst.mem_size
        mem_data = src(1) & ((1 << (8 * size)) - 1)
        mem.write(mem_addr, size, mem_data)
        if reservation_hit(state.reservation, mem_addr, size):
            state.reservation = None
        if state.tohost is not None and mem_addr == state.tohost:
            state.exited = True
            state.exit_code = exit_code_from_tohost(mem_data)
    elif cls == OpClass.AMO:
        mem_addr = (src(0) + inst.imm) & M32
        if mn == "lr.w":
            wb = mem_data = mem.read(mem_addr, 4)
            state.reservation = mem_addr
        elif mn == "sc.w":
            if state.reservation == mem_addr:
                mem_data = src(1)
                mem.write(mem_addr, 4, mem_data)
                wb = 0
            else:
                wb = 1
            state.reservation = None
        else:
            old = mem.read(mem_addr, 4)
            mem_data = sem.amo(mn, old, src(1))
            mem.write(mem_addr, 4, mem_data)
            if reservation_hit(state.reservation, mem_addr, 4):
                state.reservation = None
            wb = old
    elif cls == OpClass.FPU:
        a = src(0)
        b = src(1) if len(inst.srcs) > 1 else 0
        wb = sem.fpu(mn, a, b, inst.rm)
    elif cls == OpClass.CSR:
        wb = csr_read(inst.imm, state.retired, state.retired)
        timing_csr = inst.imm in (sem.CSR_CYCLE, sem.CSR_CYCLEH, sem.CSR_TIME, sem.CSR_TIMEH)
    elif cls == OpClass.SYSTEM:
        if mn in ("ecall", "ebreak"):
            state.exited = True
            state.exit_code = x[10]
    else:  # pragma: no cover
        raise AssertionError(cls)

    rd = rd_fp = None
    if inst.dest is not None:
        file, rd = inst.dest
        rd_fp = file == F
        if rd_fp:
            f[rd] = wb
        else:
            x[rd] = wb
    else:
        wb = None
    state.pc = next_pc
    state.retired += 1
    return state, RetireRecord(pc, mn, rd, wb, mem_addr, mem_data, taken, bool(rd_fp), inst.raw, timing_csr)


def run_reference(state, max_steps):
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    records = []
    for _ in range(max_steps):
        _, rec = step_reference(state)
        records.append(rec)
        if state.exited:
            return state, records
    raise StepLimitExceeded(state, records)
