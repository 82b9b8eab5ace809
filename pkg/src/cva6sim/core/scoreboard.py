"""In-flight instruction bookkeeping: scoreboard entries and the rename table."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..isa.decode import F, X


class FU(enum.Enum):
    __hash__ = object.__hash__

    ALU0 = "alu0"
    ALU1 = "alu1"
    MUL = "mul"
    DIV = "div"
    LSU = "lsu"
    FPU = "fpu"
    BRANCH_UNIT = "bru"


class State(enum.Enum):
    __hash__ = object.__hash__

    ISSUED = 0
    EXECUTING = 1
    DONE = 2
    WRITTEN_BACK = 3


# write-back port of each functional unit; port "B" is shared by ALU1 and the FPU
WB_PORT = {FU.ALU0: "A", FU.MUL: "A", FU.DIV: "A", FU.LSU: "A", FU.BRANCH_UNIT: "A",
           FU.ALU1: "B", FU.FPU: "B"}


@dataclass(eq=False, slots=True)
class ScoreboardEntry:
    tag: int
    inst: object
    fu: FU
    issue_cycle: int
    slot: int = 0
    state: State = State.ISSUED
    complete_cycle: int | None = None
    result: int | None = None
    operands: tuple = ()
    prediction: object = None
    # control transfers
    taken: bool | None = None
    target: int | None = None
    mispredicted: bool = False
    # memory
    mem_addr: int | None = None
    mem_data: int | None = None
    mem_outcome: str = ""
    mem_request: object = None
    # misc
    events: set = field(default_factory=set)
    timing_csr: bool = False
    wb_cycle: int | None = None

    @property
    def has_result(self):
        return self.state in (State.DONE, State.WRITTEN_BACK)

    @property
    def writes_register(self):
        return self.inst.dest is not None


class RenameTable:
    """Latest in-flight writer of each integer and FP register."""

    def __init__(self):
        self.int_latest: list[int | None] = [None] * 32
        self.fp_latest: list[int | None] = [None] * 32

    def lookup(self, file, idx):
        if file == X:
            return None if idx == 0 else self.int_latest[idx]
        return self.fp_latest[idx]

    def assign(self, file, idx, tag):
        if file == X:
            if idx:
                self.int_latest[idx] = tag
        else:
            self.fp_latest[idx] = tag

    def release(self, file, idx, tag):
        """Clear the mapping if ``tag`` is still the latest writer."""
        table = self.int_latest if file == X else self.fp_latest
        if table[idx] == tag:
            table[idx] = None

    def rebuild(self, entries):
        self.int_latest = [None] * 32
        self.fp_latest = [None] * 32
        for e in entries:
            if e.inst.dest is not None:
                self.assign(*e.inst.dest, e.tag)

    def mapped(self):
        return ({i: t for i, t in enumerate(self.int_latest) if t is not None},
                {i: t for i, t in enumerate(self.fp_latest) if t is not None})


class Scoreboard:
    """Program-ordered window of in-flight entries."""

    def __init__(self, depth=8):
        self.depth = depth
        self.entries: list[ScoreboardEntry] = []
        self.by_tag: dict[int, ScoreboardEntry] = {}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def full(self):
        return len(self.entries) >= self.depth

    def add(self, entry):
        if self.entries and entry.tag <= self.entries[-1].tag:
            raise AssertionError("tags must increase")
        self.entries.append(entry)
        self.by_tag[entry.tag] = entry

    def head(self):
        return self.entries[0] if self.entries else None

    def pop_head(self):
        e = self.entries.pop(0)
        del self.by_tag[e.tag]
        return e

    def flush_younger(self, tag):
        """Drop entries younger than ``tag``; returns them."""
        keep = [e for e in self.entries if e.tag <= tag]
        gone = self.entries[len(keep):]
        self.entries = keep
        for e in gone:
            del self.by_tag[e.tag]
        return gone

    def get(self, tag):
        return self.by_tag.get(tag)


@dataclass
class ArchRegs:
    x: list = field(default_factory=lambda: [0] * 32)
    f: list = field(default_factory=lambda: [0] * 32)

    def read(self, file, idx):
        if file == F:
            return self.f[idx]
        return self.x[idx] if idx else 0

    def write(self, file, idx, value):
        if file == F:
            self.f[idx] = value
        elif idx:
            self.x[idx] = value
