"""RV32IMC + A/F subset: decoding, value semantics and the reference interpreter."""

from .decode import (DecodedInst, IllegalInstruction, OpClass, RawFetchWord, TruncatedFetch,
                     decode, decode_word, expand_compressed)
from .memory import SparseMemory
from .reference import (ArchState, RetireRecord, StepLimitExceeded, Trap, run_reference,
                        step_reference)

__all__ = [
    "ArchState", "DecodedInst", "IllegalInstruction", "OpClass", "RawFetchWord", "RetireRecord",
    "SparseMemory", "StepLimitExceeded", "Trap", "TruncatedFetch", "decode", "decode_word",
    "expand_compressed", "run_reference", "step_reference",
]
