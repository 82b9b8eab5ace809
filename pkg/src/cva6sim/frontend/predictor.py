"""Branch direction predictors and the branch target buffer.

All state is trained at retirement only; there is no speculative history
update, so predictor state depends solely on the retired outcome stream.
"""

from __future__ import annotations

from dataclasses import dataclass

WEAK_NOT_TAKEN = 1


def _saturate(counter, taken):
    if taken:
        return counter + 1 if counter < 3 else 3
    return counter - 1 if counter > 0 else 0


class BimodalTable:
    """One 2-bit saturating counter per index, indexed by pc[k+1:2]."""

    kind = "bimodal"

    def __init__(self, entries=128):
        if entries & (entries - 1):
            raise ValueError("entries must be a power of two")
        self.entries = entries
        self.counters = [WEAK_NOT_TAKEN] * entries

    def index(self, pc):
        return (pc >> 2) & (self.entries - 1)

    def predict_taken(self, pc):
        return self.counters[self.index(pc)] >= 2

    def update(self, pc, taken):
        i = self.index(pc)
        self.counters[i] = _saturate(self.counters[i], taken)

    def snapshot(self):
        return tuple(self.counters)


class TwoLevelPredictor:
    """Per-entry local history selecting a counter from that entry's private
    pattern table (``entries`` histories of ``history_bits`` each)."""

    kind = "two-level"

    def __init__(self, entries=128, history_bits=3):
        if entries & (entries - 1):
            raise ValueError("entries must be a power of two")
        self.entries = entries
        self.history_bits = history_bits
        self.hist_mask = (1 << history_bits) - 1
        self.histories = [0] * entries
        self.patterns = [[WEAK_NOT_TAKEN] * (1 << history_bits) for _ in range(entries)]

    def index(self, pc):
        return (pc >> 2) & (self.entries - 1)

    def predict_taken(self, pc):
        i = self.index(pc)
        return self.patterns[i][self.histories[i]] >= 2

    def update(self, pc, taken):
        i = self.index(pc)
        h = self.histories[i]
        table = self.patterns[i]
        table[h] = _saturate(table[h], taken)
        self.histories[i] = ((h << 1) | int(taken)) & self.hist_mask

    def snapshot(self):
        return tuple(self.histories), tuple(tuple(p) for p in self.patterns)


class Btb:
    """Direct-mapped, full-tag branch target buffer."""

    def __init__(self, entries=64):
        self.entries = entries
        self.table: list[tuple[int, int, str] | None] = [None] * entries

    def _index(self, pc):
        return (pc >> 1) % self.entries

    def lookup(self, pc):
        e = self.table[self._index(pc)]
        if e is not None and e[0] == pc:
            return e[1]
        return None

    def update(self, pc, target, kind="branch"):
        self.table[self._index(pc)] = (pc, target, kind)

    def snapshot(self):
        return tuple(self.table)


@dataclass(frozen=True)
class Prediction:
    taken: bool
    target: int | None


class BranchPredictor:
    """Direction predictor + BTB behind a single predict/update interface."""

    def __init__(self, kind="two-level", entries=128, history_bits=3, btb_entries=64):
        if kind == "two-level":
            self.direction = TwoLevelPredictor(entries, history_bits)
        elif kind == "bimodal":
            self.direction = BimodalTable(entries)
        else:
            raise ValueError(f"unknown predictor kind {kind!r}")
        self.kind = kind
        self.btb = Btb(btb_entries)

    def predict(self, inst):
        """Prediction for a decoded BRANCH/JUMP at ``inst.pc``."""
        mn = inst.mnemonic
        if mn == "jal":
            return Prediction(True, (inst.pc + inst.imm) & 0xFFFF_FFFF)
        if mn == "jalr":
            t = self.btb.lookup(inst.pc)
            return Prediction(t is not None, t)
        if self.direction.predict_taken(inst.pc):
            t = self.btb.lookup(inst.pc)
            if t is not None:
                return Prediction(True, t)
        return Prediction(False, None)

    def update(self, inst, taken, target):
        """Train on one retired control transfer."""
        if inst.mnemonic == "jal":
            return
        if inst.mnemonic != "jalr":
            self.direction.update(inst.pc, taken)
        if taken:
            self.btb.update(inst.pc, target, "jump" if inst.mnemonic == "jalr" else "branch")

    def snapshot(self):
        return self.kind, self.direction.snapshot(), self.btb.snapshot()
