from __future__ import annotations

from dataclasses import replace

import pytest

from cva6sim.engine import SimConfig, preset, simulate
from cva6sim.isa.encode import Assembler
from cva6sim.isa.memory import SparseMemory
from cva6sim.isa.reference import ArchState
from cva6sim.program import ProgramImage, Segment

CODE = 0x8000_0000
DATA = 0x8010_0000


def program(build, data: bytes | None = None, data_addr=DATA, end="ebreak", name="test"):
    """Assemble ``build(asm)`` followed by ``end`` into an image."""
    a = Assembler(CODE)
    build(a)
    if end:
        a.emit(end)
    segs = [Segment(CODE, a.assemble())]
    if data:
        segs.append(Segment(data_addr, data))
    return ProgramImage(segs, CODE, None, name)


def ref_state(image: ProgramImage, fp=True) -> ArchState:
    mem = SparseMemory()
    image.load_into(mem)
    return ArchState(pc=image.entry_pc, mem=mem, fp_enabled=fp, tohost=image.tohost_addr)


def cfg(name="cva6s+", cosim=True, trace=False, **kw) -> SimConfig:
    return replace(preset(name), cosim_enabled=cosim, trace_enabled=trace, **kw)


def run(image, name="cva6s+", **kw):
    return simulate(cfg(name, **kw), image)


@pytest.fixture(params=["cva6", "cva6s", "cva6s+"])
def preset_name(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
