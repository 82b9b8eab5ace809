"""Instruction fetch and branch prediction."""

from .fetch import WINDOW_BYTES, FetchFault, FetchPacket, FetchUnit, illegal_marker
from .predictor import BimodalTable, BranchPredictor, Btb, Prediction, TwoLevelPredictor

__all__ = ["WINDOW_BYTES", "BimodalTable", "BranchPredictor", "Btb", "FetchFault", "FetchPacket",
           "FetchUnit", "Prediction", "TwoLevelPredictor", "illegal_marker"]
