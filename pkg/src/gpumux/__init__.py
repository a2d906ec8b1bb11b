"""Temporal GPU multiplexing simulator: tiered one-copy memory, a global
migration planner, an MLFQ scheduler and a demand-paging baseline."""

__version__ = "0.1.0"
