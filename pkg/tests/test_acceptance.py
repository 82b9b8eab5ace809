"""Acceptance criteria 1-10.

Each test records a one-line PASS/FAIL verdict before asserting; the lines
are printed in the terminal summary (see conftest.py) and when this file is
run directly with ``python tests/test_acceptance.py``.
"""
import math
import time
from dataclasses import replace

import pytest

from cva6sim.engine import Simulator, cosim_check, preset, simulate
from cva6sim.harness.cli import main, parse_config_label
from cva6sim.harness.kernels import (CODE_BASE, DATA_BASE, KERNELS, MEMORY_KERNELS, ROI_ADDR, STREAM_KERNELS,
                                     KernelParams, generate_kernel)
from cva6sim.harness.randprog import random_program
from cva6sim.harness.report import run_cell
from cva6sim.isa.encode import Assembler, encode
from cva6sim.program import ProgramImage, Segment

import conftest

PRESETS = ("cva6", "cva6s", "cva6s+")
BRANCH_OPS = {"beq", "bne", "blt", "bge", "bltu", "bgeu"}


def verdict(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _width(name):
    return preset(name).issue.width


# 1 ---------------------------------------------------------------------------------

def test_c1_functional_equivalence():
    t0 = time.perf_counter()
    bad, runs = [], 0
    for seed in range(1000):
        img = random_program(seed, n_insts=200, fp=True)
        for name in PRESETS:
            for dk in ("legacy", "hpd"):
                d = cosim_check(preset(name).with_dcache(kind=dk), img)
                runs += 1
                if d is not None:
                    bad.append((seed, name, dk, str(d)))
    dt = time.perf_counter() - t0
    verdict(1, not bad and dt < 120,
            f"{runs} cosim runs, {len(bad)} divergences, {dt:.1f} s (budget 120 s)"
            + (f"; first: {bad[0]}" if bad else ""))


# 2 ---------------------------------------------------------------------------------

def test_c2_ipc_bounds():
    worst = []
    ok = True
    for kind in KERNELS:
        img = generate_kernel(kind, KernelParams(iterations=1000, working_set_bytes=8192))
        for name in PRESETS:
            if kind == "fpu_mix" and name == "cva6s":
                continue                         # no FPU on this preset: the kernel traps by design
            st = simulate(preset(name), img).stats
            w = _width(name)
            ok &= st.ipc <= w and st.roi_ipc <= w and (name != "cva6" or st.roi_ipc <= 1.0)
            worst.append((max(st.ipc, st.roi_ipc) / w, kind, name))
    top = max(worst)
    verdict(2, ok, f"{len(worst)} kernel/preset runs; highest IPC/width = {top[0]:.3f} ({top[1]} on {top[2]})")


# 3 ---------------------------------------------------------------------------------

def test_c3_dual_issue_gain():
    img = generate_kernel("ilp", KernelParams(iterations=1000))
    base = simulate(preset("cva6"), img).stats.roi_ipc
    plus = simulate(preset("cva6s+"), img).stats.roi_ipc
    verdict(3, plus >= 1.8 and plus >= 1.7 * base,
            f"ilp IPC cva6s+ {plus:.3f} (>= 1.8), cva6 {base:.3f}, ratio {plus / base:.2f}x (>= 1.7x)")


# 4 ---------------------------------------------------------------------------------

def test_c4_renaming():
    img = generate_kernel("waw_chain", KernelParams(iterations=1000))
    cycles = {}
    for ren in (False, True):
        c = preset("cva6s+")
        c = replace(c, issue=replace(c.issue, width=2, renaming_enabled=ren))
        cycles[ren] = simulate(c, img).stats.roi_cycles
    gain = (cycles[False] - cycles[True]) / cycles[False]
    verdict(4, cycles[True] < cycles[False] and gain >= 0.10,
            f"waw_chain ROI cycles {cycles[False]} -> {cycles[True]} with renaming ({gain:.1%}, >= 10%)")


# 5 ---------------------------------------------------------------------------------

def test_c5_forwarding():
    img = generate_kernel("alu_pair", KernelParams(iterations=1000))
    res, spans = {}, {}
    for fwd in (True, False):
        c = preset("cva6s+")
        c = replace(c, trace_enabled=True, issue=replace(c.issue, alu_alu_forwarding=fwd))
        sim = Simulator(c, img)
        res[fwd] = sim.run().stats
        # the 'add x5, x8, x6' / 'add x8, x5, x7' pairs, paired by consecutive tags
        log = sim.issue_log
        pairs = []
        for (cy0, t0, pc0, _), (cy1, t1, pc1, _) in zip(log, log[1:]):
            if t1 == t0 + 1 and pc1 == pc0 + 4 and _is_pair_head(img, pc0):
                pairs.append(cy1 - cy0 + 1)
        spans[fwd] = pairs
    on, off = spans[True], spans[False]
    ipc_on, ipc_off = res[True].roi_ipc, res[False].roi_ipc
    ok = bool(on) and bool(off) and max(on) == 1 and min(off) >= 2 and ipc_on > ipc_off
    verdict(5, ok, f"pair issue span with forwarding {set(on)} cycle(s), without {set(off)}; "
                   f"IPC {ipc_on:.3f} vs {ipc_off:.3f}")


def _is_pair_head(img, pc):
    """True when the word at ``pc`` is 'add x5, x8, x6'."""
    seg = img.segments[0]
    off = pc - seg.addr
    return 0 <= off <= len(seg.data) - 4 and \
        int.from_bytes(seg.data[off:off + 4], "little") == encode("add", rd=5, rs1=8, rs2=6)


# 6 ---------------------------------------------------------------------------------

MIXED = ("TN", "TTN", "TNN")          # every mixed period-2/3 pattern up to rotation


def _branch_accuracy(img, bp):
    """Steady-state accuracy of the periodic branch, skipping the first 1000
    retired branches of any kind. Taken-ness comes from the next retired pc."""
    res = simulate(replace(preset("cva6s+"), bp_kind=bp, trace_enabled=True), img)
    rows = [line.split(",") for line in res.trace]
    outcomes = {}
    for i, f in enumerate(rows[:-1]):
        if f[3] in BRANCH_OPS:
            taken = int(rows[i + 1][1], 16) != int(f[1], 16) + len(f[2]) // 2 - 1
            outcomes.setdefault(f[1], set()).add(taken)
    periodic = next(pc for pc, seen in outcomes.items() if len(seen) == 2)
    branches = [f for f in rows if f[3] in BRANCH_OPS]
    steady = [f for f in branches[1000:] if f[1] == periodic]
    miss = sum("mispredict" in f[6] for f in steady)
    return 1 - miss / len(steady), res.stats.mispredicts


def test_c6_predictor():
    acc, lines, ok = {}, [], True
    for pat in MIXED:
        img = generate_kernel("branch_periodic", KernelParams(iterations=2000, pattern=pat))
        a2, m2 = _branch_accuracy(img, "two-level")
        a1, m1 = _branch_accuracy(img, "bimodal")
        acc[pat] = (a2, a1)
        ok &= a2 >= 0.99 and m2 < m1
        lines.append(f"{pat}: 2lev {a2:.4f}/{m2} mp, bimodal {a1:.4f}/{m1} mp")
    ok &= acc["TTN"][1] <= 0.70
    verdict(6, ok, "; ".join(lines))


# 7 ---------------------------------------------------------------------------------

def test_c7_wb_port_contention():
    p = KernelParams(iterations=600)
    with_fp = simulate(replace(preset("cva6s+"), cosim_enabled=True, trace_enabled=True),
                       generate_kernel("fpu_mix", p))
    without = simulate(replace(preset("cva6s+"), cosim_enabled=True, trace_enabled=True),
                       generate_kernel("alu_mix", p))
    ev_fp = sum("wb_stall" in line.split(",")[6] for line in with_fp.trace)
    ev_alu = sum("wb_stall" in line.split(",")[6] for line in without.trace)
    ok = ev_fp >= 1 and ev_alu == 0 and with_fp.cosim_comparisons == with_fp.stats.retired
    verdict(7, ok, f"fpu_mix {ev_fp} wb_stall events (cosim clean, {with_fp.cosim_comparisons} checks); "
                   f"alu_mix {ev_alu}")


# 8 ---------------------------------------------------------------------------------

def test_c8_bandwidth():
    t0 = time.perf_counter()
    ws = 2 * preset("cva6s+").dcache.size_bytes
    labels = ("cva6s+/legacy", "cva6s+/hpd", "cva6s+/hpd+pf")
    bw = {}
    for kind in MEMORY_KERNELS:
        img = generate_kernel(kind, KernelParams(working_set_bytes=ws))
        for lab in labels:
            cell = run_cell(parse_config_label(lab, {}), img)
            assert cell["status"] == "ok", (kind, lab, cell["error"])
            bw[kind, lab] = cell["stats"]["bandwidth_bytes_per_cycle"]
    dt = time.perf_counter() - t0
    ratios = [bw[k, labels[1]] / bw[k, labels[0]] for k in MEMORY_KERNELS]
    geo = math.exp(sum(map(math.log, ratios)) / len(ratios))
    pf_better = all(bw[k, labels[2]] > bw[k, labels[1]] for k in STREAM_KERNELS)
    ok = geo >= 1.3 and pf_better and dt < 60
    detail = ", ".join(f"{k} {bw[k, labels[0]]:.2f}/{bw[k, labels[1]]:.2f}/{bw[k, labels[2]]:.2f}"
                       for k in MEMORY_KERNELS)
    verdict(8, ok, f"ws {ws} B; hpd/legacy geomean {geo:.2f}x (>= 1.3); prefetch strictly better on "
                   f"streams: {pf_better}; {dt:.1f} s (budget 60 s); B/cyc legacy/hpd/hpd+pf: {detail}")


# 9 ---------------------------------------------------------------------------------

def _two_loads():
    a = Assembler(CODE_BASE)
    a.li(5, DATA_BASE)
    a.li(6, DATA_BASE + 4096)
    a.li(31, ROI_ADDR)
    a.emit("addi", rd=30, rs1=0, imm=1)
    a.emit("sw", rs1=31, rs2=30, imm=0)
    a.emit("lw", rd=8, rs1=5, imm=0)
    a.emit("lw", rd=9, rs1=6, imm=0)
    a.emit("add", rd=10, rs1=8, rs2=9)
    a.emit("addi", rd=30, rs1=0, imm=2)
    a.emit("sw", rs1=31, rs2=30, imm=0)
    a.emit("ebreak")
    return ProgramImage([Segment(CODE_BASE, a.assemble()), Segment(DATA_BASE, bytes(8192))],
                        CODE_BASE, None, "two_loads")


def test_c9_blocking_vs_non_blocking():
    img = _two_loads()
    gaps = {}
    for name in PRESETS:
        c = replace(preset(name), cosim_enabled=True)
        legacy = simulate(c.with_dcache(kind="legacy"), img).stats.roi_cycles
        hpd = simulate(c.with_dcache(kind="hpd"), img).stats.roi_cycles
        gaps[name] = legacy - hpd
    c = preset("cva6s+")
    expected = c.mem_latency + c.dcache.hit_latency
    ok = all(g == expected and abs(g - 20) <= 2 for g in gaps.values())
    verdict(9, ok, f"legacy - hpd ROI cycles {gaps}; model arithmetic {c.mem_latency} + {c.dcache.hit_latency} "
                   f"= {expected}; reference 20 +/- 2")


# 10 --------------------------------------------------------------------------------

def test_c10_determinism(tmp_path, capsys):
    outs, texts = [], []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        code = main(["compare", "--presets", "cva6,cva6s,cva6s+,cva6s+/legacy,cva6s+/hpd+pf",
                     "--kernels", "ilp,branch_periodic,stream_triad,gather", "--ws", "8192", "--iters", "300",
                     "--stats", str(path)])
        assert code == 0
        outs.append(path.read_bytes())
        texts.append(capsys.readouterr().out)
    verdict(10, outs[0] == outs[1] and texts[0] == texts[1],
            f"two 'sim compare' runs: stats {len(outs[0])} bytes, identical={outs[0] == outs[1]}; "
            f"table identical={texts[0] == texts[1]}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
