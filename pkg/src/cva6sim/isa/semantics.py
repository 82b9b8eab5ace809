"""Pure per-instruction value semantics, shared by the reference interpreter
and the timing pipeline. Register values are unsigned 32-bit ints; FP
registers hold raw IEEE-754 single bit patterns.
"""

from __future__ import annotations

import math
import struct

import numpy as np

M32 = 0xFFFF_FFFF
CANONICAL_NAN = 0x7FC0_0000

CSR_CYCLE, CSR_TIME, CSR_INSTRET = 0xC00, 0xC01, 0xC02
CSR_CYCLEH, CSR_TIMEH, CSR_INSTRETH = 0xC80, 0xC81, 0xC82
COUNTER_CSRS = {CSR_CYCLE, CSR_TIME, CSR_INSTRET, CSR_CYCLEH, CSR_TIMEH, CSR_INSTRETH}


def signed(v):
    return v - (1 << 32) if v & 0x8000_0000 else v


def alu(mn, a, b, imm, pc):
    """Integer ALU and M-extension result for register/immediate operands."""
    if mn == "addi":
        return (a + imm) & M32
    if mn == "add":
        return (a + b) & M32
    if mn == "sub":
        return (a - b) & M32
    if mn == "lui":
        return imm & M32
    if mn == "auipc":
        return (pc + imm) & M32
    if mn in ("slli", "sll"):
        return (a << ((imm if mn == "slli" else b) & 31)) & M32
    if mn in ("srli", "srl"):
        return a >> ((imm if mn == "srli" else b) & 31)
    if mn in ("srai", "sra"):
        return (signed(a) >> ((imm if mn == "srai" else b) & 31)) & M32
    if mn == "xori":
        return (a ^ imm) & M32
    if mn == "xor":
        return a ^ b
    if mn == "ori":
        return (a | imm) & M32
    if mn == "or":
        return a | b
    if mn == "andi":
        return a & imm & M32
    if mn == "and":
        return a & b
    if mn == "slti":
        return int(signed(a) < imm)
    if mn == "slt":
        return int(signed(a) < signed(b))
    if mn == "sltiu":
        return int(a < (imm & M32))
    if mn == "sltu":
        return int(a < b)
    if mn == "mul":
        return (a * b) & M32
    if mn == "mulh":
        return ((signed(a) * signed(b)) >> 32) & M32
    if mn == "mulhsu":
        return ((signed(a) * b) >> 32) & M32
    if mn == "mulhu":
        return (a * b) >> 32
    if mn in ("div", "divu", "rem", "remu"):
        return _divide(mn, a, b)
    raise KeyError(mn)


def _divide(mn, a, b):
    if mn == "divu":
        return M32 if b == 0 else a // b
    if mn == "remu":
        return a if b == 0 else a % b
    sa, sb = signed(a), signed(b)
    if sb == 0:
        return M32 if mn == "div" else a
    if sa == -(1 << 31) and sb == -1:
        return a if mn == "div" else 0
    q = abs(sa) // abs(sb)
    if (sa < 0) != (sb < 0):
        q = -q
    if mn == "div":
        return q & M32
    return (sa - q * sb) & M32


def branch_taken(mn, a, b):
    if mn == "beq":
        return a == b
    if mn == "bne":
        return a != b
    if mn == "blt":
        return signed(a) < signed(b)
    if mn == "bge":
        return signed(a) >= signed(b)
    if mn == "bltu":
        return a < b
    if mn == "bgeu":
        return a >= b
    raise KeyError(mn)


def control_target(inst, a):
    """Return (taken, target, link_value) for a branch or jump."""
    link = inst.next_pc
    if inst.mnemonic == "jal":
        return True, (inst.pc + inst.imm) & M32, link
    if inst.mnemonic == "jalr":
        return True, (a + inst.imm) & M32 & ~1, link
    raise KeyError(inst.mnemonic)


def load_extend(mn, raw):
    if mn == "lb":
        return raw | 0xFFFF_FF00 if raw & 0x80 else raw
    if mn == "lh":
        return raw | 0xFFFF_0000 if raw & 0x8000 else raw
    return raw


def amo(mn, mem_val, reg_val):
    """New memory value for a read-modify-write AMO."""
    if mn == "amoswap.w":
        return reg_val
    if mn == "amoadd.w":
        return (mem_val + reg_val) & M32
    if mn == "amoxor.w":
        return mem_val ^ reg_val
    if mn == "amoand.w":
        return mem_val & reg_val
    if mn == "amoor.w":
        return mem_val | reg_val
    if mn == "amomin.w":
        return mem_val if signed(mem_val) <= signed(reg_val) else reg_val
    if mn == "amomax.w":
        return mem_val if signed(mem_val) >= signed(reg_val) else reg_val
    if mn == "amominu.w":
        return min(mem_val, reg_val)
    if mn == "amomaxu.w":
        return max(mem_val, reg_val)
    raise KeyError(mn)


# -- single precision ----------------------------------------------------------

def _f32(bits):
    return np.frombuffer(struct.pack("<I", bits), dtype=np.float32)[0]


def _bits(x):
    b = struct.unpack("<I", np.float32(x).tobytes())[0]
    return CANONICAL_NAN if math.isnan(x) else b


def _is_nan(bits):
    return (bits & 0x7F80_0000) == 0x7F80_0000 and bits & 0x007F_FFFF


def _round_int(x, rm):
    # rm: 0 RNE, 1 RTZ, 2 RDN, 3 RUP, 4 RMM; 7 (dynamic) is RNE here
    if rm == 1:
        return math.trunc(x)
    if rm == 2:
        return math.floor(x)
    if rm == 3:
        return math.ceil(x)
    if rm == 4:
        return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)
    return round(x)


def fpu(mn, a, b, rm=7):
    """FP-subset result. ``a``/``b`` are bit patterns or integer register
    values depending on the operand's file; the result likewise."""
    if mn in ("fadd.s", "fsub.s", "fmul.s", "fdiv.s"):
        x, y = _f32(a), _f32(b)
        with np.errstate(all="ignore"):
            if mn == "fadd.s":
                r = x + y
            elif mn == "fsub.s":
                r = x - y
            elif mn == "fmul.s":
                r = x * y
            else:
                r = x / y
        return _bits(r)
    if mn == "fsgnj.s":
        return (a & 0x7FFF_FFFF) | (b & 0x8000_0000)
    if mn == "fsgnjn.s":
        return (a & 0x7FFF_FFFF) | (~b & 0x8000_0000)
    if mn == "fsgnjx.s":
        return a ^ (b & 0x8000_0000)
    if mn in ("feq.s", "flt.s", "fle.s"):
        if _is_nan(a) or _is_nan(b):
            return 0
        x, y = float(_f32(a)), float(_f32(b))
        return int(x == y if mn == "feq.s" else x < y if mn == "flt.s" else x <= y)
    if mn == "fmv.x.w" or mn == "fmv.w.x":
        return a & M32
    if mn in ("fcvt.w.s", "fcvt.wu.s"):
        unsigned = mn == "fcvt.wu.s"
        hi = M32 if unsigned else 0x7FFF_FFFF
        if _is_nan(a):
            return hi
        x = float(_f32(a))
        if math.isinf(x):
            return hi if x > 0 else (0 if unsigned else 0x8000_0000)
        v = _round_int(x, rm)
        lo_lim, hi_lim = (0, M32) if unsigned else (-(1 << 31), (1 << 31) - 1)
        v = min(max(v, lo_lim), hi_lim)
        return v & M32
    if mn == "fcvt.s.w":
        return _bits(np.float32(float(signed(a))))
    if mn == "fcvt.s.wu":
        return _bits(np.float32(float(a)))
    raise KeyError(mn)


def f32_bits(value):
    """Bit pattern of ``value`` rounded to single precision."""
    return _bits(np.float32(value))


def bits_f32(bits):
    return float(_f32(bits))
