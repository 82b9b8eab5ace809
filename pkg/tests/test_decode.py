import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cva6sim.isa.decode import (MNEMONICS, F, IllegalInstruction, OpClass, RawFetchWord, TruncatedFetch, X,
                                decode, decode_word, expand_compressed)
from cva6sim.isa.memory import SparseMemory
from cva6sim.isa.reference import ArchState, step_reference

capstone = pytest.importorskip("capstone")
from capstone import riscv as csr  # noqa: E402

_MD = capstone.Cs(capstone.CS_ARCH_RISCV, capstone.CS_MODE_RISCV32 | capstone.CS_MODE_RISCVC)
_MD.detail = True

ABI = ["zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1"] + [f"a{i}" for i in range(8)] \
    + [f"s{i}" for i in range(2, 12)] + ["t3", "t4", "t5", "t6"]
FABI = [f"ft{i}" for i in range(8)] + ["fs0", "fs1"] + [f"fa{i}" for i in range(8)] \
    + [f"fs{i}" for i in range(2, 12)] + [f"ft{i}" for i in range(8, 12)]
REG = {n: (X, i) for i, n in enumerate(ABI)} | {n: (F, i) for i, n in enumerate(FABI)}

# compressed mnemonics as printed by capstone -> the base instruction they expand to
C_BASE = {"c.li": "addi", "c.addi": "addi", "c.mv": "add", "c.add": "add", "c.lw": "lw", "c.sw": "sw",
          "c.lwsp": "lw", "c.swsp": "sw", "c.j": "jal", "c.jal": "jal", "c.jr": "jalr", "c.jalr": "jalr",
          "c.beqz": "beq", "c.bnez": "bne", "c.lui": "lui", "c.addi16sp": "addi", "c.addi4spn": "addi",
          "c.slli": "slli", "c.srli": "srli", "c.srai": "srai", "c.andi": "andi", "c.sub": "sub",
          "c.xor": "xor", "c.or": "or", "c.and": "and", "c.nop": "addi", "c.ebreak": "ebreak",
          "c.flw": "flw", "c.fsw": "fsw", "c.flwsp": "flw", "c.fswsp": "fsw"}


def oracle(word, size):
    """(canonical name, capstone insn) or None when capstone rejects the encoding."""
    ins = list(_MD.disasm(word.to_bytes(size, "little"), 0x1000, 1))
    if not ins or ins[0].size != size:
        return None
    name = _MD.insn_name(ins[0].id)
    for sfx in (".aqrl", ".aq", ".rl"):       # ordering bits are irrelevant on one hart
        if name.endswith(sfx):
            name = name[: -len(sfx)]
    return C_BASE.get(name, name), ins[0]


def ours(word):
    try:
        return decode_word(word, 0x1000, True)
    except IllegalInstruction:
        return None


def known_gap(word, size, ref, mine):
    """Encodings where the ISA rules and capstone's RV32 mode knowingly differ."""
    if size == 2:
        q, f3 = word & 3, word >> 13
        if ref is not None and mine is None and q in (1, 2) and f3 in (0, 4) and ref[0] in ("slli", "srli", "srai"):
            return bool(word >> 12 & 1)          # RV32C: shamt[5] = 1 is reserved
        if ref is not None and ref[0] == "lui" and mine is None:
            return (word >> 12 & 1) == 0 and (word >> 2 & 0x1F) == 0   # c.lui with nzimm = 0 is reserved
        if ref is None and mine is not None:
            return mine.rd == 0 and mine.dest is None   # HINT encodings execute as no-ops
    elif ref is not None and mine is None and ref[0] in ("slli", "srli", "srai"):
        return bool(word >> 25 & 1)                 # shamt[5] = 1 exists only on RV64
    if ref is None and mine is not None and mine.mnemonic in ("fence", "fence.i"):
        return True    # reserved FENCE fields are ignored rather than trapped
    return False


def _words(n, seed):
    rng = random.Random(seed)
    majors = [0x03, 0x07, 0x0F, 0x13, 0x17, 0x23, 0x27, 0x2F, 0x33, 0x37, 0x53, 0x63, 0x67, 0x6F, 0x73]
    out = [(rng.getrandbits(30) << 2) | 3 for _ in range(n)]
    out += [(rng.getrandbits(25) << 7) | rng.choice(majors) for _ in range(n)]
    return out


def test_spec_examples():
    add = decode_word(0x00B50533)
    assert (add.mnemonic, add.rd, add.rs1, add.rs2, add.size_bytes) == ("add", 10, 10, 11, 4)
    nop = decode_word(0x00000013)
    assert (nop.mnemonic, nop.rd, nop.rs1, nop.imm, nop.size_bytes) == ("addi", 0, 0, 0, 4)
    cli = decode_word(0x4585)
    assert (cli.mnemonic, cli.rd, cli.rs1, cli.imm, cli.size_bytes) == ("addi", 11, 0, 1, 2)


def test_spec_examples_match_oracle():
    name, ins = oracle(0x00B50533, 4)
    assert name == "add" and [ins.reg_name(o.reg) for o in ins.operands] == ["a0", "a0", "a1"]
    name, ins = oracle(0x4585, 2)
    assert name == "addi" and ins.mnemonic == "c.li"
    assert ins.reg_name(ins.operands[0].reg) == "a1" and ins.operands[1].imm == 1


def _agree(ref, mine):
    if ref is not None and ref[0] not in MNEMONICS:
        return mine is None          # outside the supported subset: must be illegal
    return (ref[0] if ref else None) == (mine.mnemonic if mine else None)


def test_all_compressed_encodings_agree_with_oracle():
    bad = []
    for h in range(1 << 16):
        if h & 3 == 3:
            continue
        ref, mine = oracle(h, 2), ours(h)
        if not _agree(ref, mine) and not known_gap(h, 2, ref, mine):
            bad.append(hex(h))
    assert not bad, bad[:20]


def test_random_32bit_encodings_agree_with_oracle():
    bad = []
    for w in _words(40000, 7):
        ref, mine = oracle(w, 4), ours(w)
        if not _agree(ref, mine) and not known_gap(w, 4, ref, mine):
            bad.append(hex(w))
    assert not bad, bad[:20]


def _expected_operands(inst):
    regs = lambda *fi: [(f, i) for f, i in fi]          # noqa: E731
    c = inst.opclass
    fr = lambda k, idx: (F if inst.uses_fp_regs[k] else X, idx)   # noqa: E731
    if c in (OpClass.LOAD, OpClass.FLOAD):
        return regs(fr(0, inst.rd)), (inst.rs1, inst.imm)
    if c in (OpClass.STORE, OpClass.FSTORE):
        return regs(fr(2, inst.rs2)), (inst.rs1, inst.imm)
    if c is OpClass.BRANCH:
        return regs((X, inst.rs1), (X, inst.rs2)), inst.imm
    if c in (OpClass.ALU, OpClass.MUL, OpClass.DIV) and inst.mnemonic not in ("lui", "auipc"):
        if inst.raw & 0x7F == 0x33:
            return regs((X, inst.rd), (X, inst.rs1), (X, inst.rs2)), None
        return regs((X, inst.rd), (X, inst.rs1)), inst.imm
    return None


def test_operands_agree_with_oracle_on_canonical_forms():
    checked = 0
    for w in _words(20000, 11):
        mine = ours(w)
        ref = oracle(w, 4)
        if mine is None or ref is None:
            continue
        name, ins = ref
        exp = _expected_operands(mine)
        if exp is None or ins.mnemonic != name:
            continue            # alias spellings drop operands
        want_regs, want_imm = exp
        got_regs, got_imm = [], None
        for o in ins.operands:
            if o.type == csr.RISCV_OP_REG:
                got_regs.append(REG[ins.reg_name(o.reg)])
            elif o.type == csr.RISCV_OP_IMM:
                got_imm = o.imm
            elif o.type == csr.RISCV_OP_MEM:
                got_imm = (REG[ins.reg_name(o.mem.base)][1], o.mem.disp)
        assert got_regs == want_regs, hex(w)
        if isinstance(want_imm, tuple):
            assert got_imm == want_imm, hex(w)
        elif want_imm is not None:
            assert (got_imm & 0xFFFF_FFFF) == (want_imm & 0xFFFF_FFFF) or got_imm == (want_imm & 0x1F), hex(w)
        checked += 1
    assert checked > 5000


@settings(max_examples=3000, deadline=None)
@given(st.integers(0, 0xFFFF_FFFF), st.booleans())
def test_decode_totality(word, fp):
    try:
        inst = decode_word(word, 0x8000_0000, fp)
    except IllegalInstruction:
        return
    assert inst.mnemonic in MNEMONICS
    assert inst.size_bytes == (4 if word & 3 == 3 else 2)
    assert all(0 <= r < 32 for r in (inst.rd, inst.rs1, inst.rs2))
    if not fp:
        assert inst.opclass not in (OpClass.FPU, OpClass.FLOAD, OpClass.FSTORE)


def test_window_decode_and_truncation():
    data = (0x4585).to_bytes(2, "little") + (0x00B50533).to_bytes(4, "little") + (0x0013).to_bytes(2, "little")
    win = RawFetchWord(data, 0x8000_0000)
    assert decode(win, 0).mnemonic == "addi"
    assert decode(win, 2).pc == 0x8000_0002
    with pytest.raises(TruncatedFetch):
        decode(RawFetchWord((0x00B50533).to_bytes(4, "little")[:2], 0x100), 0)
    with pytest.raises(ValueError):
        decode(win, 1)
    with pytest.raises(ValueError):
        RawFetchWord(data, 0x8000_0001)


def test_all_zero_and_bitmanip_are_illegal():
    with pytest.raises(IllegalInstruction):
        decode_word(0x0000)
    for w in (0x40B57533, 0x60051513, 0x20B52533):     # andn, clz, sh1add
        with pytest.raises(IllegalInstruction):
            decode_word(w)
    with pytest.raises(IllegalInstruction):
        decode_word(0x30200073)                          # mret


def _exec(word, size, x, f, mem_bytes):
    mem = SparseMemory()
    mem.write_bytes(0x1000, word.to_bytes(size, "little"))
    mem.write_bytes(0x2000, mem_bytes)
    s = ArchState(pc=0x1000, x=list(x), f=list(f), mem=mem)
    _, rec = step_reference(s)
    return s, rec


_COMPRESSED = [h for h in range(1 << 16) if h & 3 != 3 and ours(h) is not None]


@settings(max_examples=1500, deadline=None)
@given(st.sampled_from(_COMPRESSED), st.lists(st.integers(0, 0xFFFF_FFFF), min_size=32, max_size=32),
       st.binary(min_size=512, max_size=512))
def test_compressed_expansion_equivalence(h, regs, mem_bytes):
    regs[0] = 0
    # keep address registers inside the data page so loads and stores stay mapped
    for r in range(1, 32):
        regs[r] = 0x2000 + (regs[r] & 0x7C) if r in (2, 8, 9, 10, 11, 12, 13, 14, 15) else regs[r]
    f = [(v * 2654435761) & 0xFFFF_FFFF for v in regs]
    w = expand_compressed(h)
    s2, r2 = _exec(h, 2, regs, f, mem_bytes)
    s4, r4 = _exec(w, 4, regs, f, mem_bytes)
    if r2.mnemonic in ("jal", "jalr") and r2.rd:
        # the link value is the only other difference: it follows the encoding size
        assert (s2.x[r2.rd], s4.x[r4.rd]) == (0x1002, 0x1004)
        s2.x[r2.rd] = s4.x[r4.rd]
    assert s2.x == s4.x and s2.f == s4.f
    assert s2.mem.read_bytes(0x2000, 512) == s4.mem.read_bytes(0x2000, 512)
    if r2.is_branch_taken or r2.mnemonic in ("jal", "jalr"):
        assert s2.pc == s4.pc
    else:
        assert s2.pc == 0x1002 and s4.pc == 0x1004
