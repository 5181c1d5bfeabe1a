"""Ternary occupancy grids in a shared world frame and windowed map comparison."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import _kernels


class CellState(enum.IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


PGM_LEVELS = {CellState.UNKNOWN: 128, CellState.FREE: 255, CellState.OCCUPIED: 0}
_PGM_TO_STATE = {v: k for k, v in PGM_LEVELS.items()}


@dataclass(frozen=True)
class World:
    """Global L x W area, in cells."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"world must have positive extent, got {self.rows}x{self.cols}")

    @property
    def area(self) -> int:
        return self.rows * self.cols

    def bounds(self) -> "Rect":
        return Rect(0, 0, self.rows, self.cols)


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned block of cells: top-left (row, col) plus extent."""

    row: int
    col: int
    rows: int
    cols: int

    @property
    def row_end(self) -> int:
        return self.row + self.rows

    @property
    def col_end(self) -> int:
        return self.col + self.cols

    @property
    def area(self) -> int:
        return self.rows * self.cols

    def contains(self, other: "Rect") -> bool:
        return (
            self.row <= other.row
            and self.col <= other.col
            and other.row_end <= self.row_end
            and other.col_end <= self.col_end
        )

    def intersection(self, other: "Rect") -> Optional["Rect"]:
        r0 = max(self.row, other.row)
        c0 = max(self.col, other.col)
        r1 = min(self.row_end, other.row_end)
        c1 = min(self.col_end, other.col_end)
        if r1 <= r0 or c1 <= c0:
            return None
        return Rect(r0, c0, r1 - r0, c1 - c0)

    def as_list(self) -> list[int]:
        return [self.row, self.col, self.rows, self.cols]


@dataclass(frozen=True, eq=False)
class LocalMap:
    """An agent's grid over a sub-rectangle of the world.

    ``cells`` is a read-only uint8 array of shape ``(rows, cols)``.
    """

    origin: tuple[int, int]
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.uint8, copy=True)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError(f"cells must be a non-empty 2D array, got shape {cells.shape}")
        if cells.max(initial=0) > CellState.OCCUPIED:
            raise ValueError("cell values must be 0 (unknown), 1 (free) or 2 (occupied)")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @classmethod
    def unknown(cls, rect: Rect) -> "LocalMap":
        return cls((rect.row, rect.col), np.zeros((rect.rows, rect.cols), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @property
    def rect(self) -> Rect:
        return Rect(self.origin[0], self.origin[1], self.rows, self.cols)

    def within(self, world: World) -> bool:
        return world.bounds().contains(self.rect)

    def view(self, region: Rect) -> np.ndarray:
        """Cells of ``region`` (global coordinates), which must lie inside this map."""
        if not self.rect.contains(region):
            raise ValueError(f"{region} is not inside map extent {self.rect}")
        r = region.row - self.origin[0]
        c = region.col - self.origin[1]
        return self.cells[r:r + region.rows, c:c + region.cols]

    def known_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def __eq__(self, other):
        if not isinstance(other, LocalMap):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.origin, self.cells.shape, self.cells.tobytes()))

    # -- serialization: 16-byte header then one byte per cell, row-major

    def to_bytes(self) -> bytes:
        return struct.pack(">iiII", self.origin[0], self.origin[1], self.rows, self.cols) + self.cells.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LocalMap":
        if len(data) < 16:
            raise ValueError("map payload too short")
        r, c, rows, cols = struct.unpack_from(">iiII", data, 0)
        body = data[16:]
        if rows * cols != len(body) or rows == 0 or cols == 0:
            raise ValueError(f"map payload has {len(body)} cells, header says {rows}x{cols}")
        cells = np.frombuffer(body, dtype=np.uint8).reshape(rows, cols)
        return cls((r, c), cells)

    # -- PGM (P2) export

    def to_pgm(self) -> str:
        lut = np.array([PGM_LEVELS[CellState(i)] for i in range(3)], dtype=np.int64)
        gray = lut[self.cells]
        lines = ["P2", f"# origin {self.origin[0]} {self.origin[1]}", f"{self.cols} {self.rows}", "255"]
        lines.extend(" ".join(str(v) for v in row) for row in gray)
        return "\n".join(lines) + "\n"

    def write_pgm(self, path) -> None:
        Path(path).write_text(self.to_pgm())

    @classmethod
    def from_pgm(cls, text: str) -> "LocalMap":
        origin = (0, 0)
        tokens: list[str] = []
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("#"):
                parts = stripped[1:].split()
                if len(parts) == 3 and parts[0] == "origin":
                    origin = (int(parts[1]), int(parts[2]))
                continue
            tokens.extend(stripped.split())
        if not tokens or tokens[0] != "P2":
            raise ValueError("not a P2 PGM file")
        cols, rows = int(tokens[1]), int(tokens[2])
        values = [int(v) for v in tokens[4:]]
        if len(values) != rows * cols:
            raise ValueError(f"PGM body has {len(values)} values, expected {rows * cols}")
        try:
            cells = np.array([_PGM_TO_STATE[v] for v in values], dtype=np.uint8).reshape(rows, cols)
        except KeyError as exc:
            raise ValueError(f"unexpected gray level {exc.args[0]}") from None
        return cls(origin, cells)


@dataclass(frozen=True)
class CompareConfig:
    window_side: int = 8
    unknown_threshold: float = 0.2
    conflict_threshold: float = 0.2

    def __post_init__(self):
        if self.window_side < 1:
            raise ValueError("window_side must be >= 1")
        for name in ("unknown_threshold", "conflict_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class WindowStats:
    same_count: int
    diff_count: int
    unknown_a: int
    unknown_b: int
    cell_count: int

    def conflicts(self, cfg: CompareConfig) -> bool:
        known = self.same_count + self.diff_count
        if known == 0:
            return False
        return (
            self.unknown_a / self.cell_count < cfg.unknown_threshold
            and self.unknown_b / self.cell_count < cfg.unknown_threshold
            and self.diff_count / known > cfg.conflict_threshold
        )


def intersect(a: LocalMap, b: LocalMap) -> Optional[Rect]:
    return a.rect.intersection(b.rect)


def tile_windows(region: Rect, n: int) -> Iterator[Rect]:
    """Aligned n x n tiles anchored at the region's top-left; edge tiles are clipped."""
    for r in range(region.row, region.row_end, n):
        for c in range(region.col, region.col_end, n):
            yield Rect(r, c, min(n, region.row_end - r), min(n, region.col_end - c))


def window_stats(a: LocalMap, b: LocalMap, region: Rect, tile: Rect) -> WindowStats:
    overlap = intersect(a, b)
    if overlap is None or not overlap.contains(region) or not region.contains(tile):
        raise ValueError(f"tile {tile} is not inside region {region} within the overlap {overlap}")
    wa = a.view(tile)
    wb = b.view(tile)
    ua = wa == CellState.UNKNOWN
    ub = wb == CellState.UNKNOWN
    return WindowStats(
        same_count=int(np.count_nonzero((wa == wb) & ~ua)),
        diff_count=int(np.count_nonzero((wa != wb) & ~ua & ~ub)),
        unknown_a=int(np.count_nonzero(ua)),
        unknown_b=int(np.count_nonzero(ub)),
        cell_count=tile.area,
    )


def compare_maps(a: LocalMap, b: LocalMap, cfg: CompareConfig = CompareConfig()) -> bool:
    """True when the maps comply: no aligned window over their overlap conflicts."""
    overlap = intersect(a, b)
    if overlap is None:
        return True
    return not _kernels.any_conflict(
        a.view(overlap), b.view(overlap), cfg.window_side, cfg.unknown_threshold, cfg.conflict_threshold
    )


def map_coverage(m: LocalMap, world: World) -> float:
    return m.known_count() / world.area


def stamp(canvas: np.ndarray, m: LocalMap) -> None:
    """Write ``m``'s known cells into a world-sized array (in place)."""
    r, c = m.origin
    target = canvas[r:r + m.rows, c:c + m.cols]
    known = m.cells != CellState.UNKNOWN
    target[known] = m.cells[known]
