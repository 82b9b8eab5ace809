"""Seeded random straight-line programs for lock-step equivalence testing.

Control flow only jumps forward, so every program terminates. A few registers
hold data-region pointers and are never overwritten; everything else is fair
game, including x0 as a destination.
"""

from __future__ import annotations

import random

from ..isa.encode import Assembler
from ..program import ProgramImage, Segment

CODE_BASE = 0x8000_0000
DATA_BASE = 0x8010_0000
DATA_BYTES = 512

# pointer registers: sp, s1 (compressed base), t5, t6
SP, S1, P0, P1 = 2, 9, 30, 31
POINTERS = {SP: DATA_BASE + 128, S1: DATA_BASE + 64, P0: DATA_BASE + 256, P1: DATA_BASE}
WRITABLE = [r for r in range(32) if r not in POINTERS]
CREGS = [8, 10, 11, 12, 13, 14, 15]           # compressed registers minus s1

R_OPS = ["add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and"]
I_OPS = ["addi", "slti", "sltiu", "xori", "ori", "andi"]
SHIFT_OPS = ["slli", "srli", "srai"]
M_OPS = ["mul", "mulh", "mulhsu", "mulhu", "div", "divu", "rem", "remu"]
LOADS = ["lb", "lh", "lw", "lbu", "lhu"]
STORES = ["sb", "sh", "sw"]
BRANCHES = ["beq", "bne", "blt", "bge", "bltu", "bgeu"]
AMOS = ["amoadd.w", "amoswap.w", "amoxor.w", "amoand.w", "amoor.w", "amomin.w", "amomax.w",
        "amominu.w", "amomaxu.w"]
FP_BIN = ["fadd.s", "fsub.s", "fmul.s", "fdiv.s", "fsgnj.s", "fsgnjn.s", "fsgnjx.s"]
FP_CMP = ["feq.s", "flt.s", "fle.s"]
COUNTER_CSRS = [0xC00, 0xC01, 0xC02]

KINDS = [("r", 14), ("i", 14), ("shift", 5), ("lui", 3), ("m", 6), ("load", 10), ("store", 8),
         ("branch", 7), ("jal", 2), ("jalr", 1), ("c_alu", 10), ("c_mem", 4), ("c_branch", 3),
         ("amo", 2), ("lrsc", 1), ("csr", 2), ("fp", 9), ("fmem", 4)]


class _Gen:
    def __init__(self, rng, n, fp):
        self.rng = rng
        self.n = n
        self.fp = fp
        self.asm = Assembler(CODE_BASE)
        self.i = 0
        kinds = [(k, w) for k, w in KINDS if fp or not k.startswith("f")]
        self.kinds = [k for k, _ in kinds]
        self.weights = [w for _, w in kinds]

    def reg(self):
        return self.rng.choice(WRITABLE)

    def src(self):
        return self.rng.randrange(32)

    def fwd(self, max_skip=6):
        return f"L{min(self.n, self.i + 1 + self.rng.randrange(max_skip + 1))}"

    def ptr_offset(self, size, aligned=False, span=120):
        base = self.rng.choice(list(POINTERS))
        off = self.rng.randrange(0, span)
        if aligned or self.rng.random() < 0.8:
            off -= off % size
        return base, off

    def emit_one(self):
        a, r = self.asm, self.rng
        kind = r.choices(self.kinds, self.weights)[0]
        if kind == "r":
            a.emit(r.choice(R_OPS), rd=self.reg(), rs1=self.src(), rs2=self.src())
        elif kind == "i":
            a.emit(r.choice(I_OPS), rd=self.reg(), rs1=self.src(), imm=r.randrange(-2048, 2048))
        elif kind == "shift":
            a.emit(r.choice(SHIFT_OPS), rd=self.reg(), rs1=self.src(), imm=r.randrange(32))
        elif kind == "lui":
            a.emit(r.choice(["lui", "auipc"]), rd=self.reg(), imm=r.getrandbits(20) << 12)
        elif kind == "m":
            a.emit(r.choice(M_OPS), rd=self.reg(), rs1=self.src(), rs2=self.src())
        elif kind == "load":
            mn = r.choice(LOADS)
            base, off = self.ptr_offset({"lb": 1, "lbu": 1, "lh": 2, "lhu": 2}.get(mn, 4))
            a.emit(mn, rd=self.reg(), rs1=base, imm=off)
        elif kind == "store":
            mn = r.choice(STORES)
            base, off = self.ptr_offset({"sb": 1, "sh": 2}.get(mn, 4))
            a.emit(mn, rs1=base, rs2=self.src(), imm=off)
        elif kind == "branch":
            a.emit(r.choice(BRANCHES), rs1=self.src(), rs2=self.src(), imm=self.fwd())
        elif kind == "jal":
            a.emit("jal", rd=r.choice([0, 1, self.reg()]), imm=self.fwd(4))
        elif kind == "jalr":
            # auipc t; jalr rd, t, off  -> lands a few instructions ahead
            t = r.choice([5, 6, 7])
            skip = r.randrange(0, 3)
            a.emit("auipc", rd=t, imm=0)
            a.emit("jalr", rd=r.choice([0, 1]), rs1=t, imm=8 + 4 * skip)
            for _ in range(skip):
                a.emit("addi", rd=self.reg(), rs1=self.src(), imm=r.randrange(-64, 64))
        elif kind == "c_alu":
            self.compressed_alu()
        elif kind == "c_mem":
            mn = r.choice(["c.lw", "c.sw", "c.lwsp", "c.swsp"])
            if mn in ("c.lw", "c.sw"):
                a.emit_c(mn, rd=r.choice(CREGS), rs1=S1, rs2=r.choice(CREGS + [S1]), imm=4 * r.randrange(16))
            elif mn == "c.lwsp":
                a.emit_c(mn, rd=r.choice([w for w in WRITABLE if w]), imm=4 * r.randrange(24))
            else:
                a.emit_c(mn, rs2=self.src(), imm=4 * r.randrange(24))
        elif kind == "c_branch":
            mn = r.choice(["c.beqz", "c.bnez", "c.j"])
            if mn == "c.j":
                a.emit_c(mn, imm=self.fwd(4))
            else:
                a.emit_c(mn, rs1=r.choice(CREGS + [S1]), imm=self.fwd())
        elif kind == "amo":
            base = r.choice(list(POINTERS))
            a.emit(r.choice(AMOS), rd=self.reg(), rs1=base, rs2=self.src())
        elif kind == "lrsc":
            base = r.choice(list(POINTERS))
            a.emit("lr.w", rd=self.reg(), rs1=base)
            if r.random() < 0.3:
                b2, off = self.ptr_offset(4, aligned=True, span=8)
                a.emit("sw", rs1=b2, rs2=self.src(), imm=off)
            a.emit("sc.w", rd=self.reg(), rs1=r.choice([base, base, P1]), rs2=self.src())
        elif kind == "csr":
            if r.random() < 0.8:
                a.emit("csrrs", rd=self.reg(), rs1=0, imm=r.choice(COUNTER_CSRS))
            else:
                a.emit(r.choice(["csrrw", "csrrsi"]), rd=self.reg(), rs1=r.randrange(32), imm=0x340)
        elif kind == "fp":
            self.fp_op()
        elif kind == "fmem":
            base, off = self.ptr_offset(4, aligned=r.random() < 0.9)
            if r.random() < 0.5:
                a.emit("flw", rd=r.randrange(32), rs1=base, imm=off)
            else:
                a.emit("fsw", rs1=base, rs2=r.randrange(32), imm=off)

    def compressed_alu(self):
        a, r = self.asm, self.rng
        mn = r.choice(["c.addi", "c.li", "c.mv", "c.add", "c.sub", "c.xor", "c.or", "c.and", "c.slli",
                       "c.srli", "c.srai", "c.andi", "c.lui"])
        nz = [w for w in WRITABLE if w]
        if mn in ("c.addi", "c.li"):
            a.emit_c(mn, rd=r.choice(nz), imm=r.choice([i for i in range(-32, 32) if i or mn == "c.li"]))
        elif mn in ("c.mv", "c.add"):
            a.emit_c(mn, rd=r.choice(nz), rs2=r.randrange(1, 32))
        elif mn in ("c.sub", "c.xor", "c.or", "c.and"):
            a.emit_c(mn, rd=r.choice(CREGS), rs2=r.choice(CREGS + [S1]))
        elif mn == "c.slli":
            a.emit_c(mn, rd=r.choice(nz), imm=r.randrange(1, 32))
        elif mn in ("c.srli", "c.srai"):
            a.emit_c(mn, rd=r.choice(CREGS), imm=r.randrange(1, 32))
        elif mn == "c.andi":
            a.emit_c(mn, rd=r.choice(CREGS), imm=r.randrange(-32, 32))
        else:
            v = r.choice([i for i in range(-32, 32) if i])
            a.emit_c(mn, rd=r.choice([w for w in nz if w != SP]), imm=(v << 12) & 0xFFFF_FFFF)

    def fp_op(self):
        a, r = self.asm, self.rng
        f = lambda: r.randrange(32)      # noqa: E731
        pick = r.random()
        if pick < 0.45:
            mn = r.choice(FP_BIN)
            if mn.startswith("fsgnj"):
                a.emit(mn, rd=f(), rs1=f(), rs2=f())
            else:
                a.emit(mn, rd=f(), rs1=f(), rs2=f(), rm=0 if r.random() < 0.5 else 7)
        elif pick < 0.6:
            a.emit(r.choice(FP_CMP), rd=self.reg(), rs1=f(), rs2=f())
        elif pick < 0.75:
            a.emit(r.choice(["fcvt.w.s", "fcvt.wu.s"]), rd=self.reg(), rs1=f(), rm=r.choice([0, 1, 2, 3, 4, 7]))
        elif pick < 0.85:
            a.emit(r.choice(["fcvt.s.w", "fcvt.s.wu"]), rd=f(), rs1=self.src(), rm=0)
        elif pick < 0.93:
            a.emit("fmv.w.x", rd=f(), rs1=self.src())
        else:
            a.emit("fmv.x.w", rd=self.reg(), rs1=f())

    def build(self):
        a = self.asm
        for reg, val in POINTERS.items():
            a.li(reg, val)
        for reg in self.rng.sample([w for w in WRITABLE if w], 6):
            a.li(reg, self.rng.getrandbits(32))
        while self.i < self.n:
            a.label(f"L{self.i}")
            self.emit_one()
            self.i += 1
        a.label(f"L{self.n}")
        a.emit("ebreak")
        return a.assemble()


def random_program(seed, n_insts=200, fp=True) -> ProgramImage:
    """A terminating program of ``n_insts`` random body instructions ending in EBREAK."""
    rng = random.Random(seed)
    code = _Gen(rng, n_insts, fp).build()
    data = bytes(rng.getrandbits(8) for _ in range(DATA_BYTES))
    return ProgramImage([Segment(CODE_BASE, code), Segment(DATA_BASE, data)], CODE_BASE, None,
                        f"random-{seed}")
