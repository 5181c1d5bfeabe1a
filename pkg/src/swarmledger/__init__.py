"""Partition-tolerant multi-agent map merging on a DAG ledger with committee-run chains."""

from .grid_map import CellState, CompareConfig, LocalMap, Rect, World, compare_maps

__all__ = ["CellState", "CompareConfig", "LocalMap", "Rect", "World", "compare_maps"]
__version__ = "0.1.0"
