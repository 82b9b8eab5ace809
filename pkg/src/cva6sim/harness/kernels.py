"""Bundled benchmark kernels emitted directly as machine code.

Every kernel stores 1 to the ROI marker address before its timed loop and 2
after it, then exits with EBREAK and a0 = 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from ..engine import ROI_ADDR, ROI_BEGIN, ROI_END
from ..isa.encode import Assembler
from ..program import ProgramImage, Segment

CODE_BASE = 0x8000_0000
DATA_BASE = 0x8010_0000
STAGGER = 3 * 64          # offset between arrays so they do not share cache sets

STREAM_KERNELS = ("stream_copy", "stream_scale", "stream_add", "stream_triad")
MEMORY_KERNELS = STREAM_KERNELS + ("gather", "scatter")
KERNELS = ("ilp", "waw_chain", "alu_pair", "fpu_mix", "alu_mix", "branch_periodic", "pointer_chase") \
    + MEMORY_KERNELS

# scratch registers
T0, T1, T2, T3, T4, T5, T6 = 5, 6, 7, 28, 29, 30, 31
A0 = 10
RA = 1


class InvalidParams(ValueError):
    pass


@dataclass
class KernelParams:
    working_set_bytes: int = 65536
    iterations: int = 1000
    seed: int = 1
    period: int = 3
    pattern: str | None = None     # branch_periodic outcome pattern, e.g. "TTN"
    extra: dict = field(default_factory=dict)


def _roi(asm, value):
    asm.li(T6, ROI_ADDR)
    asm.emit("addi", rd=T5, rs1=0, imm=value)
    asm.emit("sw", rs1=T6, rs2=T5, imm=0)


def _finish(asm, name, data_segments=()):
    asm.emit("addi", rd=A0, rs1=0, imm=0)
    asm.emit("ebreak")
    segs = [Segment(CODE_BASE, asm.assemble())] + [Segment(a, bytes(d)) for a, d in data_segments]
    return ProgramImage(segs, CODE_BASE, None, name)


def _words(values):
    out = bytearray()
    for v in values:
        out += (v & 0xFFFF_FFFF).to_bytes(4, "little")
    return out


def _counted_loop(asm, label, body, count_reg, count):
    """Emit ``count`` executions of ``body()`` using a down-counter."""
    asm.li(count_reg, count)
    asm.label(label)
    body()
    asm.emit("addi", rd=count_reg, rs1=count_reg, imm=-1)
    asm.emit("bne", rs1=count_reg, rs2=0, imm=label)


def _called_loop(asm, name, body, per_iter, total, warmup=3):
    """Warm the caches and predictor with a short call, then time the full run.

    The loop is a subroutine so the timed call runs with a warm ICache/BTB.
    """
    loops = max(1, -(-total // per_iter))
    asm.li(T4, warmup)
    asm.emit("jal", rd=RA, imm=name)
    _roi(asm, ROI_BEGIN)
    asm.li(T4, loops)
    asm.emit("jal", rd=RA, imm=name)
    _roi(asm, ROI_END)
    asm.emit("jal", rd=0, imm=name + "_exit")
    asm.label(name)
    body()
    asm.emit("addi", rd=T4, rs1=T4, imm=-1)
    asm.emit("bne", rs1=T4, rs2=0, imm=name)
    asm.emit("jalr", rd=0, rs1=RA, imm=0)
    asm.label(name + "_exit")


# -- pipeline kernels ----------------------------------------------------------

ILP_BODY = 40
_FREE_REGS = [8, 9] + list(range(16, 28))      # never sources, counters or a0


def _ilp(p):
    asm = Assembler(CODE_BASE)
    asm.li(11, 7)
    asm.li(12, 9)

    def body():
        for k in range(ILP_BODY):
            rd = _FREE_REGS[k % len(_FREE_REGS)]
            asm.emit("addi" if k % 2 else "xori", rd=rd, rs1=11 + k % 2, imm=k + 1)

    _called_loop(asm, "ilp", body, ILP_BODY, p.iterations)
    return _finish(asm, "ilp")


def _waw_chain(p):
    """Back-to-back writers of a single register (x5)."""
    asm = Assembler(CODE_BASE)
    asm.li(11, 3)

    def body():
        for k in range(16):
            asm.emit("addi", rd=T0, rs1=11, imm=k)

    _called_loop(asm, "waw", body, 16, p.iterations)
    return _finish(asm, "waw_chain")


def _alu_pair(p):
    """Chains of dependent ALU pairs: add x5,x8,x6 ; add x8,x5,x7."""
    asm = Assembler(CODE_BASE)
    asm.li(8, 1)
    asm.li(6, 3)
    asm.li(7, 5)

    def body():
        for _ in range(16):
            asm.emit("add", rd=5, rs1=8, rs2=6)
            asm.emit("add", rd=8, rs1=5, rs2=7)

    _called_loop(asm, "pair", body, 32, p.iterations)
    return _finish(asm, "alu_pair")


def _fp_mix(p, with_fpu):
    """FPU adds interleaved with ALU ops so FPU and second-ALU results collide
    on the shared write-back port."""
    asm = Assembler(CODE_BASE)
    asm.li(11, 0x3F80_0000)     # 1.0f
    asm.li(12, 3)
    if with_fpu:
        asm.emit("fmv.w.x", rd=1, rs1=11)
        asm.emit("fmv.w.x", rd=2, rs1=11)

    def body():
        for k in range(6):
            if with_fpu:
                asm.emit("fadd.s", rd=3 + k % 4, rs1=1, rs2=2)
            for j in range(5):
                asm.emit("addi", rd=_FREE_REGS[(5 * k + j) % len(_FREE_REGS)], rs1=12, imm=j)

    per = 6 * (6 if with_fpu else 5)
    _called_loop(asm, "mix", body, per, p.iterations)
    return _finish(asm, "fpu_mix" if with_fpu else "alu_mix")


def branch_pattern(p: KernelParams):
    pat = p.pattern or "T" * (p.period - 1) + "N"
    if not pat or set(pat) - {"T", "N"} or len(pat) > 8:
        raise InvalidParams(f"bad branch pattern {pat!r}")
    return pat


PERIODIC_PAD = 28


def _branch_periodic(p):
    """One branch whose outcome follows a fixed periodic pattern.

    The phase counter wraps without branching, both paths have equal length,
    and padding keeps successive instances far enough apart that the previous
    one has retired (and trained the predictor) before the next is fetched.
    """
    pat = branch_pattern(p)
    n = len(pat)
    mask = sum(1 << i for i, o in enumerate(pat) if o == "T")
    asm = Assembler(CODE_BASE)
    asm.li(T0, 0)            # phase
    asm.li(T1, mask)
    asm.li(20, 0)
    asm.li(21, 0)
    asm.li(T4, p.iterations)
    _roi(asm, ROI_BEGIN)
    asm.label("loop")
    asm.emit("srl", rd=T2, rs1=T1, rs2=T0)
    asm.emit("andi", rd=T2, rs1=T2, imm=1)
    asm.emit("bne", rs1=T2, rs2=0, imm="taken")        # the periodic branch
    asm.emit("addi", rd=20, rs1=20, imm=1)
    asm.emit("jal", rd=0, imm="join")
    asm.label("taken")
    asm.emit("addi", rd=21, rs1=21, imm=1)
    asm.emit("addi", rd=0, rs1=0, imm=0)
    asm.label("join")
    # phase = (phase + 1) mod n, branch-free
    asm.emit("addi", rd=T0, rs1=T0, imm=1)
    asm.emit("xori", rd=T3, rs1=T0, imm=n)
    asm.emit("sltiu", rd=T3, rs1=T3, imm=1)
    asm.emit("sub", rd=T3, rs1=0, rs2=T3)
    asm.emit("xori", rd=T3, rs1=T3, imm=-1)
    asm.emit("and", rd=T0, rs1=T0, rs2=T3)
    for k in range(PERIODIC_PAD):
        asm.emit("addi", rd=22 + k % 6, rs1=0, imm=k)
    asm.emit("addi", rd=T4, rs1=T4, imm=-1)
    asm.emit("bne", rs1=T4, rs2=0, imm="loop")
    _roi(asm, ROI_END)
    return _finish(asm, f"branch_periodic({pat})")


def _pointer_chase(p):
    ws = p.working_set_bytes
    nodes = ws // 64
    if nodes < 2:
        raise InvalidParams("pointer_chase needs at least two 64-byte nodes")
    rng = random.Random(p.seed)
    order = list(range(1, nodes))
    rng.shuffle(order)
    order = [0] + order
    nxt = [0] * nodes
    for a, b in zip(order, order[1:] + order[:1]):
        nxt[a] = b
    data = bytearray(ws)
    for i, j in enumerate(nxt):
        data[i * 64:i * 64 + 4] = (DATA_BASE + j * 64).to_bytes(4, "little")
    asm = Assembler(CODE_BASE)
    asm.li(T0, DATA_BASE)
    _roi(asm, ROI_BEGIN)
    _counted_loop(asm, "chase", lambda: asm.emit("lw", rd=T0, rs1=T0, imm=0), T4, p.iterations)
    _roi(asm, ROI_END)
    return _finish(asm, "pointer_chase", [(DATA_BASE, data)])


# -- memory kernels ------------------------------------------------------------

UNROLL = 4


def stream_elements(kind, ws):
    """Elements per array: total touched bytes is ``ws`` (rounded down to the
    unroll factor for the three-array kernels)."""
    arrays = 2 if kind in ("stream_copy", "stream_scale") else 3
    n = ws // (4 * arrays)
    return n - n % UNROLL


def _arrays(sizes):
    out, addr = [], DATA_BASE
    for size in sizes:
        out.append(addr)
        addr = (addr + size + 63) // 64 * 64 + STAGGER
    return out


def _stream(kind, p):
    n = stream_elements(kind, p.working_set_bytes)
    if n < UNROLL:
        raise InvalidParams(f"working set too small for {kind}")
    rng = random.Random(p.seed)
    three = kind in ("stream_add", "stream_triad")
    bases = _arrays([4 * n] * 3)
    a, b, c = bases
    init = {a: [rng.getrandbits(16) for _ in range(n)], b: [rng.getrandbits(16) for _ in range(n)],
            c: [rng.getrandbits(16) for _ in range(n)]}
    # which arrays each kernel reads (srcs) and writes (dst)
    srcs, dst = {"stream_copy": ([a], c), "stream_scale": ([c], b), "stream_add": ([a, b], c),
                 "stream_triad": ([b, c], a)}[kind]
    used = set(srcs) | {dst}
    regs_src = [11, 12]
    asm = Assembler(CODE_BASE)
    for r, base in zip(regs_src, srcs):
        asm.li(r, base)
    asm.li(13, dst)
    asm.li(14, dst + 4 * n)
    asm.li(15, 3)                 # scalar k
    _roi(asm, ROI_BEGIN)
    asm.label("loop")
    vals = [[16 + u, 20 + u] for u in range(UNROLL)]
    for u in range(UNROLL):
        for s, r in enumerate(regs_src[:len(srcs)]):
            asm.emit("lw", rd=vals[u][s], rs1=r, imm=4 * u)
    for u in range(UNROLL):
        x, y = vals[u]
        if kind == "stream_scale":
            asm.emit("mul", rd=x, rs1=x, rs2=15)
        elif kind == "stream_add":
            asm.emit("add", rd=x, rs1=x, rs2=y)
        elif kind == "stream_triad":
            asm.emit("mul", rd=y, rs1=y, rs2=15)
            asm.emit("add", rd=x, rs1=x, rs2=y)
        asm.emit("sw", rs1=13, rs2=x, imm=4 * u)
    for r in regs_src[:len(srcs)] + [13]:
        asm.emit("addi", rd=r, rs1=r, imm=4 * UNROLL)
    asm.emit("bne", rs1=13, rs2=14, imm="loop")
    _roi(asm, ROI_END)
    if not three:
        used.discard(b if kind == "stream_copy" else a)
    segs = [(base, _words(init[base])) for base in sorted(used)]
    return _finish(asm, kind, segs)


def _gather_scatter(kind, p):
    ws = p.working_set_bytes
    n = ws // 16
    n -= n % UNROLL
    if n < UNROLL:
        raise InvalidParams(f"working set too small for {kind}")
    rng = random.Random(p.seed)
    idx = [rng.randrange(2 * n) for _ in range(n)]
    xs = [rng.getrandbits(16) for _ in range(n)]
    av = [rng.getrandbits(16) for _ in range(2 * n)]
    idx_base, x_base, a_base = _arrays([4 * n, 4 * n, 8 * n])
    asm = Assembler(CODE_BASE)
    asm.li(11, idx_base)
    asm.li(12, x_base)
    asm.li(13, a_base)
    asm.li(14, idx_base + 4 * n)
    _roi(asm, ROI_BEGIN)
    asm.label("loop")
    for u in range(UNROLL):
        asm.emit("lw", rd=16 + u, rs1=11, imm=4 * u)
    if kind == "scatter":
        for u in range(UNROLL):
            asm.emit("lw", rd=20 + u, rs1=12, imm=4 * u)
    for u in range(UNROLL):
        asm.emit("slli", rd=16 + u, rs1=16 + u, imm=2)
        asm.emit("add", rd=16 + u, rs1=16 + u, rs2=13)
    for u in range(UNROLL):
        if kind == "gather":
            asm.emit("lw", rd=20 + u, rs1=16 + u, imm=0)
        else:
            asm.emit("sw", rs1=16 + u, rs2=20 + u, imm=0)
    if kind == "gather":
        for u in range(UNROLL):
            asm.emit("sw", rs1=12, rs2=20 + u, imm=4 * u)
    asm.emit("addi", rd=11, rs1=11, imm=4 * UNROLL)
    asm.emit("addi", rd=12, rs1=12, imm=4 * UNROLL)
    asm.emit("bne", rs1=11, rs2=14, imm="loop")
    _roi(asm, ROI_END)
    segs = [(idx_base, _words(idx)), (x_base, _words(xs)), (a_base, _words(av))]
    return _finish(asm, kind, segs)


def generate_kernel(kind, params: KernelParams | None = None, **kw) -> ProgramImage:
    p = replace(params) if params is not None else KernelParams(**kw)
    if p.iterations < 1 or p.working_set_bytes < 1:
        raise InvalidParams("iterations and working set must be positive")
    if p.iterations >= 1 << 31:
        raise InvalidParams("iteration count too large")
    if kind.startswith("branch_periodic(") and kind.endswith(")"):
        try:
            p.period = int(kind[len("branch_periodic("):-1])
        except ValueError:
            raise InvalidParams(f"bad kernel name {kind!r}") from None
        kind = "branch_periodic"
    if kind == "branch_periodic" and not 1 <= p.period <= 8:
        raise InvalidParams("period must be in 1..8")
    builders = {
        "ilp": _ilp, "waw_chain": _waw_chain, "alu_pair": _alu_pair,
        "fpu_mix": lambda q: _fp_mix(q, True), "alu_mix": lambda q: _fp_mix(q, False),
        "branch_periodic": _branch_periodic, "pointer_chase": _pointer_chase,
        "gather": lambda q: _gather_scatter("gather", q), "scatter": lambda q: _gather_scatter("scatter", q),
    }
    for s in STREAM_KERNELS:
        builders[s] = lambda q, s=s: _stream(s, q)
    if kind not in builders:
        raise InvalidParams(f"unknown kernel {kind!r}")
    return builders[kind](p)
