"""Instruction fetch through an 8-byte window with fetch-time prediction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..isa.decode import DecodedInst, IllegalInstruction, OpClass, RawFetchWord, TruncatedFetch, decode
from .predictor import Prediction

WINDOW_BYTES = 8
NOT_TAKEN = Prediction(False, None)

# decoded windows keyed by (pc, bytes, fp_enabled); decoding is pure so this is shared
_WINDOWS: dict = {}
_WINDOW_CACHE_LIMIT = 1 << 16


class FetchFault(Exception):
    def __init__(self, pc):
        self.pc = pc
        super().__init__(f"fetch outside mapped memory at 0x{pc:08x}")


def illegal_marker(pc, raw):
    """Stand-in for an undecodable encoding; it traps if it ever retires."""
    size = 4 if raw & 3 == 3 else 2
    return DecodedInst(OpClass.SYSTEM, "illegal", 0, 0, 0, 0, size, pc, raw)


@dataclass
class FetchPacket:
    insts: list
    predictions: list
    fetch_cycle: int
    next_pc: int = 0
    fault: bool = False
    seq: int = 0

    @property
    def nbytes(self):
        return sum(i.size_bytes for i in self.insts)


@dataclass
class FetchStats:
    packets: int = 0
    stall_cycles: int = 0
    redirects: int = 0


class FetchUnit:
    def __init__(self, backing, icache, predictor, fp_enabled=True, buffer_packets=2):
        self.backing = backing
        self.icache = icache
        self.predictor = predictor
        self.fp_enabled = fp_enabled
        self.buffer: deque[FetchPacket] = deque()
        self.buffer_packets = buffer_packets
        self.pc = 0
        self.resume_cycle = 0
        self.halted = False       # stopped after an illegal/faulting fetch until redirected
        self.stats = FetchStats()
        self._redirect: tuple[int, int, int] | None = None   # (cycle, tag, pc)
        self._seq = 0

    def reset(self, pc):
        self.pc = pc
        self.buffer.clear()
        self.halted = False

    # -- the fetch operation ----------------------------------------------------

    def fetch(self, pc, cycle):
        """Fetch one packet at ``pc``. Returns None while stalled on an ICache miss."""
        if pc & 1:
            raise ValueError("fetch pc must be 2-byte aligned")
        if not self.backing.is_mapped(pc):
            raise FetchFault(pc)
        lb = self.icache.line_bytes
        if not self.icache.probe(pc // lb, cycle):
            return None
        data = self.backing.read_bytes(pc, WINDOW_BYTES)
        key = (pc, data, self.fp_enabled)
        decoded = _WINDOWS.get(key)
        if decoded is None:
            if len(_WINDOWS) >= _WINDOW_CACHE_LIMIT:
                _WINDOWS.clear()
            decoded = _WINDOWS[key] = self._decode_window(pc, data)
        insts, preds = [], []
        next_pc = pc
        fault = False
        first_line = pc // lb
        for inst, illegal in decoded:
            if illegal:
                insts.append(inst)
                preds.append(NOT_TAKEN)
                fault = True
                break
            end_line = (inst.pc + inst.size_bytes - 1) // lb
            if end_line != first_line and not self.icache.probe(end_line, cycle):
                break
            insts.append(inst)
            next_pc = inst.next_pc
            if inst.is_control:
                p = self.predictor.predict(inst)
                preds.append(p)
                if p.taken:
                    next_pc = p.target
                    break
            else:
                preds.append(NOT_TAKEN)
        if not insts:
            return None
        self._seq += 1
        return FetchPacket(insts, preds, cycle, next_pc, fault, self._seq)

    def _decode_window(self, pc, data):
        """Decoded instructions of one window, stopping at a truncated or illegal one."""
        window = RawFetchWord(data, pc)
        out = []
        offset = 0
        while offset < WINDOW_BYTES:
            try:
                inst = decode(window, offset, self.fp_enabled)
            except TruncatedFetch:
                break
            except IllegalInstruction as e:
                out.append((illegal_marker(pc + offset, e.raw), True))
                break
            out.append((inst, False))
            offset += inst.size_bytes
        return tuple(out)

    # -- pipeline-facing -------------------------------------------------------

    def tick(self, cycle):
        """Fetch stage for one cycle: appends at most one packet to the buffer."""
        if self._redirect is not None and self._redirect[0] < cycle:
            self._apply_redirect()
        if self.halted or cycle < self.resume_cycle or len(self.buffer) >= self.buffer_packets:
            return None
        try:
            pkt = self.fetch(self.pc, cycle)
        except FetchFault:
            self._seq += 1
            pkt = FetchPacket([illegal_marker(self.pc, 0)], [NOT_TAKEN], cycle, self.pc, True, self._seq)
        if pkt is None:
            self.stats.stall_cycles += 1
            return None
        self.stats.packets += 1
        self.buffer.append(pkt)
        if pkt.fault:
            self.halted = True
        self.pc = pkt.next_pc
        return pkt

    def redirect(self, new_pc, flush_tag, cycle):
        """Steer fetch to ``new_pc`` from the next cycle, dropping buffered packets.

        Several redirects in one cycle resolve in favour of the oldest
        (lowest ``flush_tag``). Predictor state is untouched.
        """
        if self._redirect is None or self._redirect[0] != cycle or flush_tag < self._redirect[1]:
            self._redirect = (cycle, flush_tag, new_pc)
        self.buffer.clear()
        self.resume_cycle = cycle + 1
        self.halted = True   # nothing more this cycle; lifted when the redirect applies

    def _apply_redirect(self):
        _, _, pc = self._redirect
        self._redirect = None
        self.pc = pc
        self.halted = False
        self.stats.redirects += 1

    def next_event(self, cycle):
        if self._redirect is not None:
            return cycle + 1
        if self.halted:
            return None
        if self.icache.pending_done is not None:
            return self.icache.pending_done
        return cycle + 1 if len(self.buffer) < self.buffer_packets else None
