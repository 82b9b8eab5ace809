"""Issue, rename, scoreboard and load/store unit."""

from .issue import (IssueConfig, IssueContext, Resolution, StructuralHazard, arbitrate_wb, forward_operand,
                    resolve_branch, retire, retire_record, schedule_execution, try_issue)
from .lsu import LoadStoreUnit
from .scoreboard import FU, ArchRegs, RenameTable, Scoreboard, ScoreboardEntry, State

__all__ = [
    "FU", "ArchRegs", "IssueConfig", "IssueContext", "LoadStoreUnit", "RenameTable", "Resolution",
    "Scoreboard", "ScoreboardEntry", "State", "StructuralHazard", "arbitrate_wb", "forward_operand",
    "resolve_branch", "retire", "retire_record", "schedule_execution", "try_issue",
]
