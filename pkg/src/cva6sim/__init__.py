"""Cycle-level timing model of an in-order dual-issue RV32 core with
blocking and non-blocking data-cache back ends."""

__version__ = "0.1.0"
