"""Instruction encoders and a small two-pass assembler.

Used to expand compressed encodings, to build the bundled benchmark kernels
and to generate random test programs. Register operands are plain integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MASK32 = 0xFFFF_FFFF


def r_type(f7, rs2, rs1, f3, rd, op):
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def i_type(imm, rs1, f3, rd, op):
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def s_type(imm, rs2, rs1, f3, op):
    imm &= 0xFFF
    return ((imm >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1F) << 7) | op


def b_type(imm, rs2, rs1, f3, op=0x63):
    imm &= 0x1FFF
    return (((imm >> 12) & 1) << 31 | ((imm >> 5) & 0x3F) << 25 | (rs2 << 20) | (rs1 << 15)
            | (f3 << 12) | ((imm >> 1) & 0xF) << 8 | ((imm >> 11) & 1) << 7 | op)


def u_type(imm, rd, op):
    return (imm & 0xFFFFF000) | (rd << 7) | op


def j_type(imm, rd, op=0x6F):
    imm &= 0x1FFFFF
    return (((imm >> 20) & 1) << 31 | ((imm >> 1) & 0x3FF) << 21 | ((imm >> 11) & 1) << 20
            | ((imm >> 12) & 0xFF) << 12 | (rd << 7) | op)


_OP = {  # mnemonic -> (funct7, funct3)
    "add": (0x00, 0), "sub": (0x20, 0), "sll": (0x00, 1), "slt": (0x00, 2), "sltu": (0x00, 3),
    "xor": (0x00, 4), "srl": (0x00, 5), "sra": (0x20, 5), "or": (0x00, 6), "and": (0x00, 7),
    "mul": (0x01, 0), "mulh": (0x01, 1), "mulhsu": (0x01, 2), "mulhu": (0x01, 3),
    "div": (0x01, 4), "divu": (0x01, 5), "rem": (0x01, 6), "remu": (0x01, 7),
}
_OPIMM = {"addi": 0, "slti": 2, "sltiu": 3, "xori": 4, "ori": 6, "andi": 7}
_SHIFTIMM = {"slli": (0x00, 1), "srli": (0x00, 5), "srai": (0x20, 5)}
_LOAD = {"lb": 0, "lh": 1, "lw": 2, "lbu": 4, "lhu": 5}
_STORE = {"sb": 0, "sh": 1, "sw": 2}
_BRANCH = {"beq": 0, "bne": 1, "blt": 4, "bge": 5, "bltu": 6, "bgeu": 7}
_CSR = {"csrrw": 1, "csrrs": 2, "csrrc": 3, "csrrwi": 5, "csrrsi": 6, "csrrci": 7}
_AMO = {"amoadd.w": 0x00, "amoswap.w": 0x01, "lr.w": 0x02, "sc.w": 0x03, "amoxor.w": 0x04,
        "amoor.w": 0x08, "amoand.w": 0x0C, "amomin.w": 0x10, "amomax.w": 0x14,
        "amominu.w": 0x18, "amomaxu.w": 0x1C}
_FP_RRR = {"fadd.s": (0x00, 0), "fsub.s": (0x04, 0), "fmul.s": (0x08, 0), "fdiv.s": (0x0C, 0),
           "fsgnj.s": (0x10, 0), "fsgnjn.s": (0x10, 1), "fsgnjx.s": (0x10, 2),
           "feq.s": (0x50, 2), "flt.s": (0x50, 1), "fle.s": (0x50, 0)}
_FP_UNARY = {"fcvt.w.s": (0x60, 0), "fcvt.wu.s": (0x60, 1), "fcvt.s.w": (0x68, 0),
             "fcvt.s.wu": (0x68, 1), "fmv.x.w": (0x70, 0), "fmv.w.x": (0x78, 0)}
# rounding-mode field for ops that carry one; 7 = dynamic (frm, which is RNE here)
_RM_DYN = 7


def encode(mn, rd=0, rs1=0, rs2=0, imm=0, rm=None):
    """Encode one 32-bit instruction. Branch/jump ``imm`` is a byte offset."""
    if mn in _OP:
        f7, f3 = _OP[mn]
        return r_type(f7, rs2, rs1, f3, rd, 0x33)
    if mn in _OPIMM:
        return i_type(imm, rs1, _OPIMM[mn], rd, 0x13)
    if mn in _SHIFTIMM:
        f7, f3 = _SHIFTIMM[mn]
        return r_type(f7, imm & 0x1F, rs1, f3, rd, 0x13)
    if mn in _LOAD:
        return i_type(imm, rs1, _LOAD[mn], rd, 0x03)
    if mn in _STORE:
        return s_type(imm, rs2, rs1, _STORE[mn], 0x23)
    if mn in _BRANCH:
        return b_type(imm, rs2, rs1, _BRANCH[mn])
    if mn in _CSR:
        return i_type(imm, rs1, _CSR[mn], rd, 0x73)
    if mn in _AMO:
        return r_type(_AMO[mn] << 2, 0 if mn == "lr.w" else rs2, rs1, 2, rd, 0x2F)
    if mn in _FP_RRR:
        f7, f3 = _FP_RRR[mn]
        if f7 < 0x10:
            f3 = _RM_DYN if rm is None else rm
        return r_type(f7, rs2, rs1, f3, rd, 0x53)
    if mn in _FP_UNARY:
        f7, sel = _FP_UNARY[mn]
        f3 = 0 if f7 in (0x70, 0x78) else (_RM_DYN if rm is None else rm)
        return r_type(f7, sel, rs1, f3, rd, 0x53)
    if mn == "lui":
        return u_type(imm, rd, 0x37)
    if mn == "auipc":
        return u_type(imm, rd, 0x17)
    if mn == "jal":
        return j_type(imm, rd)
    if mn == "jalr":
        return i_type(imm, rs1, 0, rd, 0x67)
    if mn == "flw":
        return i_type(imm, rs1, 2, rd, 0x07)
    if mn == "fsw":
        return s_type(imm, rs2, rs1, 2, 0x27)
    if mn == "fence":
        return 0x0FF0000F
    if mn == "fence.i":
        return 0x0000100F
    if mn == "ecall":
        return 0x00000073
    if mn == "ebreak":
        return 0x00100073
    raise ValueError(f"cannot encode {mn!r}")


# -- compressed encoders (subset used by kernels and program generators) -------

def _creg(r):
    if not 8 <= r <= 15:
        raise ValueError(f"x{r} is not a compressed register")
    return r - 8


def encode_c(mn, rd=0, rs1=0, rs2=0, imm=0):
    """Encode one 16-bit instruction in its canonical compressed form."""
    if mn == "c.addi" or mn == "c.li" or mn == "c.andi":
        if not -32 <= imm < 32:
            raise ValueError("imm out of range")
        i = imm & 0x3F
        if mn == "c.andi":
            return (4 << 13) | ((i >> 5) << 12) | (2 << 10) | (_creg(rd) << 7) | ((i & 0x1F) << 2) | 1
        f3 = 0 if mn == "c.addi" else 2
        return (f3 << 13) | ((i >> 5) << 12) | (rd << 7) | ((i & 0x1F) << 2) | 1
    if mn == "c.lui":
        i = (imm >> 12) & 0x3F
        return (3 << 13) | ((i >> 5) << 12) | (rd << 7) | ((i & 0x1F) << 2) | 1
    if mn in ("c.srli", "c.srai"):
        f2 = 0 if mn == "c.srli" else 1
        return (4 << 13) | (f2 << 10) | (_creg(rd) << 7) | ((imm & 0x1F) << 2) | 1
    if mn in ("c.sub", "c.xor", "c.or", "c.and"):
        f = ("c.sub", "c.xor", "c.or", "c.and").index(mn)
        return (0x23 << 10) | (_creg(rd) << 7) | (f << 5) | (_creg(rs2) << 2) | 1
    if mn in ("c.j", "c.jal"):
        o = imm & 0xFFF
        bits = (((o >> 11) & 1) << 12 | ((o >> 4) & 1) << 11 | ((o >> 8) & 3) << 9
                | ((o >> 10) & 1) << 8 | ((o >> 6) & 1) << 7 | ((o >> 7) & 1) << 6
                | ((o >> 1) & 7) << 3 | ((o >> 5) & 1) << 2)
        return ((5 if mn == "c.j" else 1) << 13) | bits | 1
    if mn in ("c.beqz", "c.bnez"):
        o = imm & 0x1FF
        bits = (((o >> 8) & 1) << 12 | ((o >> 3) & 3) << 10 | ((o >> 6) & 3) << 5
                | ((o >> 1) & 3) << 3 | ((o >> 5) & 1) << 2)
        return ((6 if mn == "c.beqz" else 7) << 13) | bits | (_creg(rs1) << 7) | 1
    if mn == "c.slli":
        return (rd << 7) | ((imm & 0x1F) << 2) | 2
    if mn == "c.mv":
        return (8 << 12) | (rd << 7) | (rs2 << 2) | 2
    if mn == "c.add":
        return (9 << 12) | (rd << 7) | (rs2 << 2) | 2
    if mn == "c.jr":
        return (8 << 12) | (rs1 << 7) | 2
    if mn == "c.jalr":
        return (9 << 12) | (rs1 << 7) | 2
    if mn == "c.ebreak":
        return 0x9002
    if mn in ("c.lw", "c.sw", "c.flw", "c.fsw"):
        o = imm & 0x7C
        f3 = {"c.lw": 2, "c.flw": 3, "c.sw": 6, "c.fsw": 7}[mn]
        r = rd if mn in ("c.lw", "c.flw") else rs2
        return ((f3 << 13) | ((o >> 3) & 7) << 10 | (_creg(rs1) << 7) | ((o >> 2) & 1) << 6
                | ((o >> 6) & 1) << 5 | (_creg(r) << 2))
    if mn in ("c.lwsp", "c.flwsp"):
        o = imm & 0xFC
        f3 = 2 if mn == "c.lwsp" else 3
        return (f3 << 13) | ((o >> 5) & 1) << 12 | (rd << 7) | ((o >> 2) & 7) << 4 | ((o >> 6) & 3) << 2 | 2
    if mn in ("c.swsp", "c.fswsp"):
        o = imm & 0xFC
        f3 = 6 if mn == "c.swsp" else 7
        return (f3 << 13) | ((o >> 2) & 0xF) << 9 | ((o >> 6) & 3) << 7 | (rs2 << 2) | 2
    if mn == "c.addi4spn":
        o = imm & 0x3FC
        return (((o >> 4) & 3) << 11 | ((o >> 6) & 0xF) << 7 | ((o >> 2) & 1) << 6
                | ((o >> 3) & 1) << 5 | (_creg(rd) << 2))
    if mn == "c.addi16sp":
        o = imm & 0x3F0
        return ((3 << 13) | ((o >> 9) & 1) << 12 | (2 << 7) | ((o >> 4) & 1) << 6
                | ((o >> 6) & 1) << 5 | ((o >> 7) & 3) << 3 | ((o >> 5) & 1) << 2 | 1)
    raise ValueError(f"cannot encode {mn!r}")


@dataclass
class _Item:
    kind: str           # "i32", "c16", "data"
    mn: str = ""
    args: dict = field(default_factory=dict)
    label: str | None = None
    data: bytes = b""

    @property
    def size(self):
        return {"i32": 4, "c16": 2}.get(self.kind, len(self.data))


class Assembler:
    """Two-pass assembler over a linear code region.

    Branch and jump targets may be label names; they are resolved to pc-relative
    byte offsets when :meth:`assemble` runs.
    """

    def __init__(self, base):
        self.base = base
        self.items: list[_Item] = []
        self.labels: dict[str, int] = {}
        self._size = 0

    @property
    def pc(self):
        return self.base + self._size

    def _add(self, item):
        self.items.append(item)
        self._size += item.size
        return self

    def label(self, name):
        if name in self.labels:
            raise ValueError(f"duplicate label {name}")
        self.labels[name] = self.pc
        return self

    def emit(self, mn, **kw):
        return self._add(_Item("i32", mn, kw))

    def emit_c(self, mn, **kw):
        return self._add(_Item("c16", mn, kw))

    def word(self, value):
        return self._add(_Item("data", data=(value & MASK32).to_bytes(4, "little")))

    def li(self, rd, value):
        """Load a 32-bit constant (lui+addi, or addi alone when it fits)."""
        value &= MASK32
        sval = value - (1 << 32) if value & 0x8000_0000 else value
        if -2048 <= sval < 2048:
            return self.emit("addi", rd=rd, rs1=0, imm=sval)
        hi = (value + 0x800) & 0xFFFFF000
        lo = sval - (hi - (1 << 32) if hi & 0x8000_0000 else hi)
        lo = ((lo + 2048) & 0xFFF) - 2048
        self.emit("lui", rd=rd, imm=hi)
        if lo:
            self.emit("addi", rd=rd, rs1=rd, imm=lo)
        return self

    def assemble(self):
        out = bytearray()
        pc = self.base
        for it in self.items:
            if it.kind == "data":
                out += it.data
            else:
                kw = dict(it.args)
                tgt = kw.get("imm")
                if isinstance(tgt, str):
                    if tgt not in self.labels:
                        raise ValueError(f"undefined label {tgt}")
                    kw["imm"] = self.labels[tgt] - pc
                if it.kind == "i32":
                    out += encode(it.mn, **kw).to_bytes(4, "little")
                else:
                    out += encode_c(it.mn, **kw).to_bytes(2, "little")
            pc += it.size
        return bytes(out)
