"""RV32IMC + A/F-subset decoder.

Compressed encodings are expanded to their 32-bit equivalent and decoded
through the same path, so both forms share one ``DecodedInst`` shape and
differ only in ``size_bytes`` and ``raw``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

from .encode import b_type, i_type, j_type, r_type, s_type, u_type


class IllegalInstruction(Exception):
    def __init__(self, raw, pc=None):
        self.raw = raw
        self.pc = pc
        super().__init__(f"illegal instruction 0x{raw:x}" + (f" at 0x{pc:08x}" if pc is not None else ""))


class TruncatedFetch(Exception):
    """A 32-bit instruction straddles the end of the fetch window."""


class OpClass(enum.Enum):
    __hash__ = object.__hash__      # identity hash; the default hashes the name in Python code

    ALU = "alu"
    BRANCH = "branch"
    JUMP = "jump"
    LOAD = "load"
    STORE = "store"
    MUL = "mul"
    DIV = "div"
    CSR = "csr"
    SYSTEM = "system"
    FPU = "fpu"
    FLOAD = "fload"
    FSTORE = "fstore"
    AMO = "amo"


X, F = 0, 1  # register files


@dataclass(frozen=True, slots=True)
class DecodedInst:
    opclass: OpClass
    mnemonic: str
    rd: int
    rs1: int
    rs2: int
    imm: int
    size_bytes: int
    pc: int
    raw: int
    rs3: int | None = None
    # per-operand register file for (rd, rs1, rs2); X or F
    uses_fp_regs: tuple = (False, False, False)
    # (file, index) of real source operands, in rs1, rs2 order
    srcs: tuple = ()
    # (file, index) of the destination, or None when nothing is written
    dest: tuple | None = None
    rm: int = 0
    is_control: bool = False

    @property
    def next_pc(self):
        return (self.pc + self.size_bytes) & 0xFFFF_FFFF

    @property
    def is_compressed(self):
        return self.size_bytes == 2

    @property
    def mem_size(self):
        return _MEM_SIZE.get(self.mnemonic, 0)


_MEM_SIZE = {"lb": 1, "lbu": 1, "sb": 1, "lh": 2, "lhu": 2, "sh": 2, "lw": 4, "sw": 4,
             "flw": 4, "fsw": 4}

_OP_NAMES = {
    (0x00, 0): "add", (0x20, 0): "sub", (0x00, 1): "sll", (0x00, 2): "slt", (0x00, 3): "sltu",
    (0x00, 4): "xor", (0x00, 5): "srl", (0x20, 5): "sra", (0x00, 6): "or", (0x00, 7): "and",
    (0x01, 0): "mul", (0x01, 1): "mulh", (0x01, 2): "mulhsu", (0x01, 3): "mulhu",
    (0x01, 4): "div", (0x01, 5): "divu", (0x01, 6): "rem", (0x01, 7): "remu",
}
_OPIMM_NAMES = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
_LOAD_NAMES = {0: "lb", 1: "lh", 2: "lw", 4: "lbu", 5: "lhu"}
_STORE_NAMES = {0: "sb", 1: "sh", 2: "sw"}
_BRANCH_NAMES = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
_CSR_NAMES = {1: "csrrw", 2: "csrrs", 3: "csrrc", 5: "csrrwi", 6: "csrrsi", 7: "csrrci"}
_AMO_NAMES = {0x00: "amoadd.w", 0x01: "amoswap.w", 0x02: "lr.w", 0x03: "sc.w", 0x04: "amoxor.w",
              0x08: "amoor.w", 0x0C: "amoand.w", 0x10: "amomin.w", 0x14: "amomax.w",
              0x18: "amominu.w", 0x1C: "amomaxu.w"}
_FP_ARITH = {0x00: "fadd.s", 0x04: "fsub.s", 0x08: "fmul.s", 0x0C: "fdiv.s"}
_FP_SGNJ = {0: "fsgnj.s", 1: "fsgnjn.s", 2: "fsgnjx.s"}
_FP_CMP = {2: "feq.s", 1: "flt.s", 0: "fle.s"}
_VALID_RM = {0, 1, 2, 3, 4, 7}

MNEMONICS = frozenset(
    list(_OP_NAMES.values()) + list(_OPIMM_NAMES.values()) + list(_LOAD_NAMES.values())
    + list(_STORE_NAMES.values()) + list(_BRANCH_NAMES.values()) + list(_CSR_NAMES.values())
    + list(_AMO_NAMES.values()) + list(_FP_ARITH.values()) + list(_FP_SGNJ.values())
    + list(_FP_CMP.values())
    + ["slli", "srli", "srai", "lui", "auipc", "jal", "jalr", "fence", "fence.i", "ecall",
       "ebreak", "flw", "fsw", "fcvt.w.s", "fcvt.wu.s", "fcvt.s.w", "fcvt.s.wu", "fmv.x.w",
       "fmv.w.x"])


def _sext(v, bits):
    m = 1 << (bits - 1)
    return (v & (m - 1)) - (v & m)


def _mk(opclass, mn, w, pc, size, raw, rd=0, rs1=0, rs2=0, imm=0, srcs=(), dest=None, rm=0):
    if dest is not None and dest[0] == X and dest[1] == 0:
        dest = None
    fp = (dest is not None and dest[0] == F,
          len(srcs) > 0 and srcs[0][0] == F,
          len(srcs) > 1 and srcs[1][0] == F)
    return DecodedInst(opclass, mn, rd, rs1, rs2, imm, size, pc, raw, None, fp, tuple(srcs), dest, rm,
                       opclass is OpClass.BRANCH or opclass is OpClass.JUMP)


def _decode32(w, pc, size, raw, fp_enabled):
    op = w & 0x7F
    rd = (w >> 7) & 31
    f3 = (w >> 12) & 7
    rs1 = (w >> 15) & 31
    rs2 = (w >> 20) & 31
    f7 = w >> 25
    imm_i = _sext(w >> 20, 12)

    def ill():
        return IllegalInstruction(raw, pc)

    if op == 0x33:
        mn = _OP_NAMES.get((f7, f3))
        if mn is None:
            raise ill()
        cls = OpClass.ALU if f7 != 1 else (OpClass.MUL if f3 < 4 else OpClass.DIV)
        return _mk(cls, mn, w, pc, size, raw, rd, rs1, rs2, 0, ((X, rs1), (X, rs2)), (X, rd))
    if op == 0x13:
        if f3 == 1:
            if f7 != 0:
                raise ill()
            mn, imm = "slli", rs2
        elif f3 == 5:
            if f7 == 0:
                mn = "srli"
            elif f7 == 0x20:
                mn = "srai"
            else:
                raise ill()
            imm = rs2
        else:
            mn, imm = _OPIMM_NAMES[f3], imm_i
        return _mk(OpClass.ALU, mn, w, pc, size, raw, rd, rs1, 0, imm, ((X, rs1),), (X, rd))
    if op == 0x37 or op == 0x17:
        mn = "lui" if op == 0x37 else "auipc"
        return _mk(OpClass.ALU, mn, w, pc, size, raw, rd, 0, 0, _sext(w & 0xFFFFF000, 32), (), (X, rd))
    if op == 0x6F:
        imm = _sext(((w >> 31) & 1) << 20 | ((w >> 12) & 0xFF) << 12 | ((w >> 20) & 1) << 11
                    | ((w >> 21) & 0x3FF) << 1, 21)
        return _mk(OpClass.JUMP, "jal", w, pc, size, raw, rd, 0, 0, imm, (), (X, rd))
    if op == 0x67:
        if f3 != 0:
            raise ill()
        return _mk(OpClass.JUMP, "jalr", w, pc, size, raw, rd, rs1, 0, imm_i, ((X, rs1),), (X, rd))
    if op == 0x63:
        mn = _BRANCH_NAMES.get(f3)
        if mn is None:
            raise ill()
        imm = _sext(((w >> 31) & 1) << 12 | ((w >> 7) & 1) << 11 | ((w >> 25) & 0x3F) << 5
                    | ((w >> 8) & 0xF) << 1, 13)
        return _mk(OpClass.BRANCH, mn, w, pc, size, raw, 0, rs1, rs2, imm, ((X, rs1), (X, rs2)))
    if op == 0x03:
        mn = _LOAD_NAMES.get(f3)
        if mn is None:
            raise ill()
        return _mk(OpClass.LOAD, mn, w, pc, size, raw, rd, rs1, 0, imm_i, ((X, rs1),), (X, rd))
    if op == 0x23:
        mn = _STORE_NAMES.get(f3)
        if mn is None:
            raise ill()
        imm = _sext((f7 << 5) | rd, 12)
        return _mk(OpClass.STORE, mn, w, pc, size, raw, 0, rs1, rs2, imm, ((X, rs1), (X, rs2)))
    if op == 0x0F:
        if f3 == 0:
            return _mk(OpClass.SYSTEM, "fence", w, pc, size, raw)
        if f3 == 1:
            return _mk(OpClass.SYSTEM, "fence.i", w, pc, size, raw)
        raise ill()
    if op == 0x73:
        if f3 == 0:
            if w == 0x00000073:
                return _mk(OpClass.SYSTEM, "ecall", w, pc, size, raw)
            if w == 0x00100073:
                return _mk(OpClass.SYSTEM, "ebreak", w, pc, size, raw)
            raise ill()
        mn = _CSR_NAMES.get(f3)
        if mn is None:
            raise ill()
        srcs = ((X, rs1),) if f3 < 4 else ()
        return _mk(OpClass.CSR, mn, w, pc, size, raw, rd, rs1, 0, (w >> 20) & 0xFFF, srcs, (X, rd))
    if op == 0x2F:
        mn = _AMO_NAMES.get(w >> 27)
        if f3 != 2 or mn is None or (mn == "lr.w" and rs2 != 0):
            raise ill()
        srcs = ((X, rs1),) if mn == "lr.w" else ((X, rs1), (X, rs2))
        return _mk(OpClass.AMO, mn, w, pc, size, raw, rd, rs1, rs2, 0, srcs, (X, rd))
    if not fp_enabled:
        raise ill()
    if op == 0x07:
        if f3 != 2:
            raise ill()
        return _mk(OpClass.FLOAD, "flw", w, pc, size, raw, rd, rs1, 0, imm_i, ((X, rs1),), (F, rd))
    if op == 0x27:
        if f3 != 2:
            raise ill()
        imm = _sext((f7 << 5) | rd, 12)
        return _mk(OpClass.FSTORE, "fsw", w, pc, size, raw, 0, rs1, rs2, imm, ((X, rs1), (F, rs2)))
    if op == 0x53:
        if f7 in _FP_ARITH:
            if f3 not in _VALID_RM:
                raise ill()
            return _mk(OpClass.FPU, _FP_ARITH[f7], w, pc, size, raw, rd, rs1, rs2, 0,
                       ((F, rs1), (F, rs2)), (F, rd), rm=f3)
        if f7 == 0x10 and f3 in _FP_SGNJ:
            return _mk(OpClass.FPU, _FP_SGNJ[f3], w, pc, size, raw, rd, rs1, rs2, 0,
                       ((F, rs1), (F, rs2)), (F, rd))
        if f7 == 0x50 and f3 in _FP_CMP:
            return _mk(OpClass.FPU, _FP_CMP[f3], w, pc, size, raw, rd, rs1, rs2, 0,
                       ((F, rs1), (F, rs2)), (X, rd))
        if f7 == 0x60 and rs2 in (0, 1) and f3 in _VALID_RM:
            mn = "fcvt.w.s" if rs2 == 0 else "fcvt.wu.s"
            return _mk(OpClass.FPU, mn, w, pc, size, raw, rd, rs1, 0, 0, ((F, rs1),), (X, rd), rm=f3)
        if f7 == 0x68 and rs2 in (0, 1) and f3 in _VALID_RM:
            mn = "fcvt.s.w" if rs2 == 0 else "fcvt.s.wu"
            return _mk(OpClass.FPU, mn, w, pc, size, raw, rd, rs1, 0, 0, ((X, rs1),), (F, rd), rm=f3)
        if f7 == 0x70 and rs2 == 0 and f3 == 0:
            return _mk(OpClass.FPU, "fmv.x.w", w, pc, size, raw, rd, rs1, 0, 0, ((F, rs1),), (X, rd))
        if f7 == 0x78 and rs2 == 0 and f3 == 0:
            return _mk(OpClass.FPU, "fmv.w.x", w, pc, size, raw, rd, rs1, 0, 0, ((X, rs1),), (F, rd))
    raise ill()


def expand_compressed(h, fp_enabled=True):
    """Return the 32-bit equivalent of the 16-bit encoding ``h``.

    Raises IllegalInstruction for reserved encodings, RV64/D-only forms and
    (when ``fp_enabled`` is false) the F load/store forms.
    """
    q = h & 3
    f3 = h >> 13
    bit12 = (h >> 12) & 1
    rd = (h >> 7) & 31
    rs2 = (h >> 2) & 31
    rdp = 8 + ((h >> 2) & 7)   # rd'/rs2' in bits 4:2
    rs1p = 8 + ((h >> 7) & 7)  # rs1'/rd' in bits 9:7
    imm6 = _sext((bit12 << 5) | ((h >> 2) & 0x1F), 6)

    if q == 0:
        if f3 == 0:
            nzuimm = ((h >> 7) & 0xF) << 6 | ((h >> 11) & 3) << 4 | ((h >> 5) & 1) << 3 | ((h >> 6) & 1) << 2
            if nzuimm == 0:
                raise IllegalInstruction(h)
            return i_type(nzuimm, 2, 0, rdp, 0x13)
        uimm = ((h >> 10) & 7) << 3 | ((h >> 6) & 1) << 2 | ((h >> 5) & 1) << 6
        if f3 == 2:
            return i_type(uimm, rs1p, 2, rdp, 0x03)
        if f3 == 6:
            return s_type(uimm, rdp, rs1p, 2, 0x23)
        if fp_enabled and f3 == 3:
            return i_type(uimm, rs1p, 2, rdp, 0x07)
        if fp_enabled and f3 == 7:
            return s_type(uimm, rdp, rs1p, 2, 0x27)
        raise IllegalInstruction(h)

    if q == 1:
        if f3 == 0:
            return i_type(imm6, rd, 0, rd, 0x13)
        if f3 in (1, 5):
            imm = _sext(bit12 << 11 | ((h >> 11) & 1) << 4 | ((h >> 9) & 3) << 8 | ((h >> 8) & 1) << 10
                        | ((h >> 7) & 1) << 6 | ((h >> 6) & 1) << 7 | ((h >> 3) & 7) << 1
                        | ((h >> 2) & 1) << 5, 12)
            return j_type(imm, 1 if f3 == 1 else 0)
        if f3 == 2:
            return i_type(imm6, 0, 0, rd, 0x13)
        if f3 == 3:
            if rd == 2:
                imm = _sext(bit12 << 9 | ((h >> 6) & 1) << 4 | ((h >> 5) & 1) << 6 | ((h >> 3) & 3) << 7
                            | ((h >> 2) & 1) << 5, 10)
                if imm == 0:
                    raise IllegalInstruction(h)
                return i_type(imm, 2, 0, 2, 0x13)
            if imm6 == 0:
                raise IllegalInstruction(h)
            return u_type((imm6 << 12) & 0xFFFFF000, rd, 0x37)
        if f3 == 4:
            f2 = (h >> 10) & 3
            if f2 in (0, 1):
                if bit12:
                    raise IllegalInstruction(h)
                return r_type(0x20 if f2 else 0, (h >> 2) & 0x1F, rs1p, 5, rs1p, 0x13)
            if f2 == 2:
                return i_type(imm6, rs1p, 7, rs1p, 0x13)
            if bit12:
                raise IllegalInstruction(h)
            f = (h >> 5) & 3
            f7, fn3 = ((0x20, 0), (0, 4), (0, 6), (0, 7))[f]
            return r_type(f7, rdp, rs1p, fn3, rs1p, 0x33)
        imm = _sext(bit12 << 8 | ((h >> 10) & 3) << 3 | ((h >> 5) & 3) << 6 | ((h >> 3) & 3) << 1
                    | ((h >> 2) & 1) << 5, 9)
        return b_type(imm, 0, rs1p, 0 if f3 == 6 else 1)

    if q == 2:
        if f3 == 0:
            if bit12:
                raise IllegalInstruction(h)
            return r_type(0, (h >> 2) & 0x1F, rd, 1, rd, 0x13)
        if f3 in (2, 3):
            uimm = bit12 << 5 | ((h >> 4) & 7) << 2 | ((h >> 2) & 3) << 6
            if f3 == 2:
                if rd == 0:
                    raise IllegalInstruction(h)
                return i_type(uimm, 2, 2, rd, 0x03)
            if fp_enabled:
                return i_type(uimm, 2, 2, rd, 0x07)
            raise IllegalInstruction(h)
        if f3 == 4:
            if not bit12:
                if rs2 == 0:
                    if rd == 0:
                        raise IllegalInstruction(h)
                    return i_type(0, rd, 0, 0, 0x67)
                return r_type(0, rs2, 0, 0, rd, 0x33)
            if rs2 == 0:
                if rd == 0:
                    return 0x00100073
                return i_type(0, rd, 0, 1, 0x67)
            return r_type(0, rs2, rd, 0, rd, 0x33)
        if f3 in (6, 7):
            uimm = ((h >> 9) & 0xF) << 2 | ((h >> 7) & 3) << 6
            if f3 == 6:
                return s_type(uimm, rs2, 2, 2, 0x23)
            if fp_enabled:
                return s_type(uimm, rs2, 2, 2, 0x27)
        raise IllegalInstruction(h)
    raise ValueError("not a compressed encoding")


@lru_cache(maxsize=1 << 16)
def decode_word(word, pc=0, fp_enabled=True):
    """Decode a raw encoding (16-bit if its low two bits are not 0b11)."""
    if word & 3 != 3:
        h = word & 0xFFFF
        try:
            w = expand_compressed(h, fp_enabled)
        except IllegalInstruction:
            raise IllegalInstruction(h, pc) from None
        return _decode32(w, pc, 2, h, fp_enabled)
    return _decode32(word & 0xFFFF_FFFF, pc, 4, word & 0xFFFF_FFFF, fp_enabled)


def instruction_length(low_half):
    return 4 if low_half & 3 == 3 else 2


@dataclass(frozen=True)
class RawFetchWord:
    data: bytes   # up to 8 bytes, little-endian
    base_pc: int

    def __post_init__(self):
        if self.base_pc & 1:
            raise ValueError("fetch window base must be 2-byte aligned")


def decode(window, offset=0, fp_enabled=True):
    """Decode the instruction at byte ``offset`` of a fetch window."""
    if offset & 1:
        raise ValueError("offset must be even")
    data = window.data
    if offset + 2 > len(data):
        raise TruncatedFetch(window.base_pc + offset)
    low = data[offset] | data[offset + 1] << 8
    pc = (window.base_pc + offset) & 0xFFFF_FFFF
    if low & 3 != 3:
        return decode_word(low, pc, fp_enabled)
    if offset + 4 > len(data):
        raise TruncatedFetch(pc)
    word = low | data[offset + 2] << 16 | data[offset + 3] << 24
    return decode_word(word, pc, fp_enabled)
