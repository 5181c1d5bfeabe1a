"""Agent sensing: honest copies of ground truth, optionally with inserted fake walls."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .._hashing import sha256_hex
from ..grid_map import CellState, LocalMap, Rect
from ..netsim import ConfigError


@dataclass(frozen=True)
class ByzantineModel:
    count: tuple[int, int] = (1, 1)
    wall_length: tuple[int, int] = (8, 12)
    seed: int = 0
    require_detectable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "count", tuple(self.count))
        object.__setattr__(self, "wall_length", tuple(self.wall_length))
        lo, hi = self.count
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad anomaly count range {self.count}")
        lo, hi = self.wall_length
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad wall length range {self.wall_length}")


def derive_seed(*parts) -> int:
    return int(sha256_hex(*(str(p).encode() for p in parts))[:16], 16)


def sense_region(truth: np.ndarray, region: Rect, anomaly: Optional[ByzantineModel] = None, seed: int = 0) -> LocalMap:
    """Map of ``region`` copied from ``truth``; with ``anomaly``, straight walls are drawn over free cells."""
    rows, cols = truth.shape
    if region.row < 0 or region.col < 0 or region.row_end > rows or region.col_end > cols or region.area == 0:
        raise ConfigError(f"region {region} is outside the {rows}x{cols} world")
    cells = np.array(truth[region.row:region.row_end, region.col:region.col_end], dtype=np.uint8)
    if anomaly is not None:
        _draw_walls(cells, anomaly, random.Random(seed))
    return LocalMap((region.row, region.col), cells)


def _draw_walls(cells: np.ndarray, model: ByzantineModel, rng: random.Random) -> None:
    n_walls = rng.randint(*model.count)
    h, w = cells.shape
    for _ in range(n_walls):
        length = rng.randint(*model.wall_length)
        horizontal = rng.random() < 0.5
        span = w if horizontal else h
        length = min(length, span)
        free = cells == CellState.FREE
        # prefer a segment lying entirely in free space
        if horizontal:
            runs = np.lib.stride_tricks.sliding_window_view(free, (1, length)).all(axis=(2, 3))
        else:
            runs = np.lib.stride_tricks.sliding_window_view(free, (length, 1)).all(axis=(2, 3))
        starts = np.argwhere(runs)
        if len(starts):
            r, c = (int(v) for v in starts[rng.randrange(len(starts))])
        else:
            r = rng.randrange(h - (0 if horizontal else length - 1))
            c = rng.randrange(w - (length - 1 if horizontal else 0))
        seg = cells[r, c:c + length] if horizontal else cells[r:r + length, c]
        seg[seg == CellState.FREE] = CellState.OCCUPIED


def anomaly_cells(honest: LocalMap, altered: LocalMap) -> list[tuple[int, int]]:
    """Global coordinates where the altered map differs from the honest one."""
    diff = np.argwhere(honest.cells != altered.cells)
    return [(int(r) + honest.origin[0], int(c) + honest.origin[1]) for r, c in diff]
