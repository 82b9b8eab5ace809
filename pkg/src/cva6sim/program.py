from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Segment:
    addr: int
    data: bytes


@dataclass
class ProgramImage:
    """Loadable memory contents plus entry point and optional ``tohost`` address."""

    segments: list[Segment] = field(default_factory=list)
    entry_pc: int = 0
    tohost_addr: int | None = None
    name: str = ""

    def __post_init__(self):
        spans = sorted((s.addr, s.addr + len(s.data)) for s in self.segments if s.data)
        for (_, end), (start, _) in zip(spans, spans[1:]):
            if start < end:
                raise ValueError("program segments overlap")
        if spans and not any(lo <= self.entry_pc < hi for lo, hi in spans):
            raise ValueError(f"entry pc 0x{self.entry_pc:08x} is outside every segment")

    def load_into(self, mem):
        for s in self.segments:
            mem.write_bytes(s.addr, s.data)
