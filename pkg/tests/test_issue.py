import itertools
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cva6sim.core.issue import (IssueConfig, IssueContext, Resolution, StructuralHazard, arbitrate_wb,
                                forward_operand, resolve_branch, retire, schedule_execution, try_issue)
from cva6sim.core.scoreboard import FU, ArchRegs, RenameTable, Scoreboard, ScoreboardEntry, State
from cva6sim.engine import preset, simulate
from cva6sim.frontend.predictor import Prediction
from cva6sim.harness.randprog import random_program
from cva6sim.isa.decode import X, decode_word
from cva6sim.isa.encode import encode

NT = Prediction(False, None)


def _i(mn, pc=0x100, **kw):
    return decode_word(encode(mn, **kw), pc)


def _setup(cfg=None, **regs):
    arch = ArchRegs()
    for k, v in regs.items():
        arch.x[int(k[1:])] = v
    sb, rt = Scoreboard(8), RenameTable()
    ctx = IssueContext(10, arch, {})
    return sb, rt, cfg or IssueConfig(), ctx, arch


def _window(*insts):
    return [(inst, NT) for inst in insts]


# -- try_issue -------------------------------------------------------------------

def test_dependent_alu_pair_issues_together_with_forwarding():
    sb, rt, cfg, ctx, _ = _setup(x2=3, x3=4, x5=10)
    res = try_issue(_window(_i("add", rd=1, rs1=2, rs2=3), _i("add", 0x104, rd=4, rs1=1, rs2=5)), sb, rt, cfg, ctx)
    assert len(res.entries) == 2 and res.entries[1].result == 17
    assert [e.fu for e in res.entries] == [FU.ALU0, FU.ALU1]


def test_dependent_pair_splits_without_forwarding():
    sb, rt, cfg, ctx, _ = _setup(IssueConfig(alu_alu_forwarding=False), x2=3, x3=4)
    w = _window(_i("add", rd=1, rs1=2, rs2=3), _i("add", 0x104, rd=4, rs1=1, rs2=5))
    res = try_issue(w, sb, rt, cfg, ctx)
    assert len(res.entries) == 1
    # next cycle: the producer has completed and forwards normally
    sb.entries[0].state = State.DONE
    ctx.cycle += 1
    assert len(try_issue(w[1:], sb, rt, cfg, ctx).entries) == 1


@pytest.mark.parametrize("renaming", [False, True])
def test_waw_pair(renaming):
    sb, rt, cfg, ctx, _ = _setup(IssueConfig(renaming_enabled=renaming))
    w = _window(_i("add", rd=5, rs1=1, rs2=2), _i("sub", 0x104, rd=5, rs1=3, rs2=4))
    res = try_issue(w, sb, rt, cfg, ctx)
    if renaming:
        assert len(res.entries) == 2 and rt.int_latest[5] == res.entries[1].tag
    else:
        assert len(res.entries) == 1 and rt.int_latest[5] == res.entries[0].tag
        assert try_issue(w[1:], sb, rt, cfg, ctx).stall == "waw"


def test_slot1_accepts_only_alu_and_branch():
    for second in (_i("lw", 0x104, rd=6, rs1=0), _i("mul", 0x104, rd=6, rs1=1, rs2=2),
                   _i("sw", 0x104, rs1=0, rs2=1), _i("jal", 0x104, rd=1, imm=8)):
        sb, rt, cfg, ctx, _ = _setup()
        assert len(try_issue(_window(_i("addi", rd=1, rs1=0, imm=1), second), sb, rt, cfg, ctx).entries) == 1
    sb, rt, cfg, ctx, _ = _setup()
    res = try_issue(_window(_i("addi", rd=1, rs1=0, imm=1), _i("beq", 0x104, rs1=2, rs2=3, imm=8)),
                    sb, rt, cfg, ctx)
    assert len(res.entries) == 2


def test_slot1_needs_slot0_to_issue():
    sb, rt, cfg, ctx, _ = _setup()
    rt.assign(X, 9, 99)                 # x9 has an unfinished writer
    res = try_issue(_window(_i("add", rd=1, rs1=9, rs2=0), _i("addi", 0x104, rd=2, rs1=0, imm=1)), sb, rt, cfg, ctx)
    assert not res.entries and res.stall == "raw"


def test_width_one_issues_one():
    sb, rt, cfg, ctx, _ = _setup(IssueConfig(width=1))
    res = try_issue(_window(_i("addi", rd=1, rs1=0, imm=1), _i("addi", 0x104, rd=2, rs1=0, imm=1)), sb, rt, cfg, ctx)
    assert len(res.entries) == 1


def test_full_scoreboard_is_structural():
    sb, rt, cfg, ctx, _ = _setup(IssueConfig(scoreboard_depth=1))
    sb.depth = 1
    try_issue(_window(_i("addi", rd=1, rs1=0, imm=1)), sb, rt, cfg, ctx)
    assert try_issue(_window(_i("addi", 0x104, rd=2, rs1=0, imm=1)), sb, rt, cfg, ctx).stall == "structural"


# -- forward_operand -------------------------------------------------------------

def _entry(tag, inst, state=State.EXECUTING, result=None, fu=FU.ALU0):
    return ScoreboardEntry(tag=tag, inst=inst, fu=fu, issue_cycle=0, state=state, result=result)


def test_forward_x0_is_zero():
    sb, rt, _, _, arch = _setup()
    rt.assign(X, 0, 3)
    assert forward_operand((X, 0), sb, rt, arch) == ("value", 0)


def test_forward_prefers_latest_writer():
    sb, rt, _, _, arch = _setup()
    sb.add(_entry(5, _i("addi", rd=7, rs1=0, imm=1), State.DONE, 111))
    sb.add(_entry(9, _i("addi", rd=7, rs1=0, imm=2), State.EXECUTING))
    rt.assign(X, 7, 5)
    rt.assign(X, 7, 9)
    assert forward_operand((X, 7), sb, rt, arch) == ("wait", 9)
    sb.get(9).state, sb.get(9).result = State.DONE, 222
    assert forward_operand((X, 7), sb, rt, arch) == ("value", 222)


def test_forward_unmapped_reads_architecture():
    sb, rt, _, _, arch = _setup(x3=42)
    assert forward_operand((X, 3), sb, rt, arch) == ("value", 42)


# -- arbitrate_wb ----------------------------------------------------------------

def test_single_candidate_writes_back():
    e = _entry(1, _i("fadd.s", rd=1, rs1=2, rs2=3), State.DONE, 0, FU.FPU)
    assert arbitrate_wb([e]) == ([e], [])


def test_fpu_older_than_alu1_wins_shared_port():
    fpu = _entry(4, _i("fadd.s", rd=1, rs1=2, rs2=3), State.DONE, 0, FU.FPU)
    alu1 = _entry(7, _i("addi", rd=2, rs1=0, imm=1), State.DONE, 1, FU.ALU1)
    alu0 = _entry(6, _i("addi", rd=3, rs1=0, imm=1), State.DONE, 1, FU.ALU0)
    winners, losers = arbitrate_wb([alu1, alu0, fpu])
    assert winners == [fpu, alu0] and losers == [alu1]


def test_no_candidates():
    assert arbitrate_wb([]) == ([], [])
    with pytest.raises(ValueError):
        arbitrate_wb([_entry(1, _i("addi", rd=1, rs1=0, imm=1))])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(FU)), st.integers(0, 1000)), max_size=12, unique_by=lambda t: t[1]))
def test_wb_arbitration_drops_nothing(cands):
    es = [_entry(tag, _i("addi", rd=1, rs1=0, imm=1), State.DONE, 0, fu) for fu, tag in cands]
    w, lost = arbitrate_wb(es)
    assert sorted(e.tag for e in w + lost) == sorted(e.tag for e in es)
    assert len({e.fu in (FU.ALU1, FU.FPU) for e in w}) == len(w)     # at most one per port
    for e in lost:
        assert any(x.tag < e.tag and (x.fu in (FU.ALU1, FU.FPU)) == (e.fu in (FU.ALU1, FU.FPU)) for x in w)


# -- schedule_execution ----------------------------------------------------------

def test_alu_latency_one():
    assert schedule_execution(_entry(0, _i("add", rd=1, rs1=1, rs2=1)), IssueConfig(), 10) == 11


def test_back_to_back_divs_wait_for_the_unit():
    cfg, busy = IssueConfig(), {}
    div = lambda t: _entry(t, _i("div", rd=1, rs1=2, rs2=3), fu=FU.DIV)   # noqa: E731
    assert schedule_execution(div(0), cfg, 10, busy) == 31
    with pytest.raises(StructuralHazard) as ei:
        schedule_execution(div(1), cfg, 11, busy)
    assert ei.value.busy_until == 31
    assert schedule_execution(div(1), cfg, 31, busy) == 52


def test_default_latencies():
    cfg = IssueConfig()
    assert schedule_execution(_entry(0, _i("mul", rd=1, rs1=2, rs2=3), fu=FU.MUL), cfg, 0) == 2
    assert schedule_execution(_entry(0, _i("fadd.s", rd=1, rs1=2, rs2=3), fu=FU.FPU), cfg, 0) == 3
    assert schedule_execution(_entry(0, _i("fdiv.s", rd=1, rs1=2, rs2=3), fu=FU.FPU), cfg, 0) == 11


# -- resolve_branch --------------------------------------------------------------

def _branch(pred):
    e = _entry(0, _i("beq", 0x100, rs1=1, rs2=2, imm=0x100), fu=FU.BRANCH_UNIT)
    e.prediction = pred
    return e


def test_resolution_cases():
    assert resolve_branch(_branch(Prediction(True, 0x200)), True, 0x200) == Resolution(True)
    assert resolve_branch(_branch(NT), True, 0x200) == Resolution(False, 0x200)
    e = _branch(Prediction(True, 0x300))
    assert resolve_branch(e, True, 0x200) == Resolution(False, 0x200) and e.mispredicted
    assert resolve_branch(_branch(Prediction(True, 0x200)), False, 0x104) == Resolution(False, 0x104)


# -- retire ----------------------------------------------------------------------

def test_retire_cases():
    sb, rt, _, _, arch = _setup()
    a = _entry(0, _i("lw", rd=1, rs1=0), State.EXECUTING, fu=FU.LSU)
    b = _entry(1, _i("addi", 0x104, rd=2, rs1=0, imm=5), State.WRITTEN_BACK, 5)
    sb.add(a)
    sb.add(b)
    rt.assign(X, 1, 0)
    rt.assign(X, 2, 1)
    assert retire(sb, rt, arch, 2) == []               # older load still executing
    a.state, a.result = State.WRITTEN_BACK, 9
    assert retire(sb, rt, arch, 2) == [a, b]
    assert arch.x[1:3] == [9, 5] and rt.mapped() == ({}, {})


def test_retire_keeps_younger_mapping():
    sb, rt, _, _, arch = _setup()
    a = _entry(0, _i("addi", rd=1, rs1=0, imm=1), State.WRITTEN_BACK, 1)
    b = _entry(1, _i("addi", 0x104, rd=1, rs1=0, imm=2), State.EXECUTING)
    sb.add(a)
    sb.add(b)
    rt.assign(X, 1, 0)
    rt.assign(X, 1, 1)
    assert retire(sb, rt, arch, 2) == [a] and rt.int_latest[1] == 1


# -- architectural equivalence across the timing knobs ---------------------------

KNOBS = list(itertools.product((1, 2), (False, True), (False, True), ("bimodal", "two-level")))


@settings(max_examples=48, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(KNOBS))
def test_timing_knobs_never_change_architecture(seed, knobs):
    width, ren, fwd, bp = knobs
    base = preset("cva6s+")
    cfg = replace(base, issue=replace(base.issue, width=width, renaming_enabled=ren, alu_alu_forwarding=fwd),
                  bp_kind=bp, cosim_enabled=True)
    res = simulate(cfg, random_program(seed, fp=True))     # Divergence would raise
    assert res.stats.retired <= width * res.stats.cycles
