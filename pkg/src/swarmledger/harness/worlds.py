"""Seeded ground-truth worlds (fully known: every cell free or occupied)."""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np

from ..grid_map import CellState, LocalMap

FREE = CellState.FREE
OCC = CellState.OCCUPIED


def empty(rows: int, cols: int, seed: int = 0) -> np.ndarray:
    return np.full((rows, cols), FREE, dtype=np.uint8)


def town(rows: int, cols: int, seed: int = 0, block: int = 12, street: int = 4) -> np.ndarray:
    """Rectangular buildings on a street grid; streets stay free."""
    rng = random.Random(seed)
    grid = empty(rows, cols)
    for r0 in range(street, rows - street, block + street):
        for c0 in range(street, cols - street, block + street):
            r1 = min(r0 + block, rows - street)
            c1 = min(c0 + block, cols - street)
            if r1 - r0 < 3 or c1 - c0 < 3:
                continue
            # each lot holds one or two buildings with random setbacks
            if rng.random() < 0.35:
                mid = rng.randint(r0 + 1, r1 - 2)
                parts = [(r0, mid, c0, c1), (mid + 1, r1, c0, c1)]
            else:
                parts = [(r0, r1, c0, c1)]
            for a, b, c, d in parts:
                inset = [rng.randint(0, 1) for _ in range(4)]
                ra, rb = a + inset[0], b - inset[1]
                ca, cb = c + inset[2], d - inset[3]
                if rb > ra and cb > ca:
                    grid[ra:rb, ca:cb] = OCC
    return grid


def rooms(rows: int, cols: int, seed: int = 0, room: int = 10) -> np.ndarray:
    """Outer wall plus a lattice of interior walls with one door per wall segment."""
    rng = random.Random(seed)
    grid = empty(rows, cols)
    grid[0, :] = grid[-1, :] = OCC
    grid[:, 0] = grid[:, -1] = OCC
    for r in range(room, rows - 1, room):
        grid[r, 1:-1] = OCC
        for c0 in range(1, cols - 1, room):
            c1 = min(c0 + room - 1, cols - 2)
            door = rng.randint(c0, max(c0, c1 - 2))
            grid[r, door:door + 3] = FREE
    for c in range(room, cols - 1, room):
        grid[1:-1, c] = OCC
        for r0 in range(1, rows - 1, room):
            r1 = min(r0 + room - 1, rows - 2)
            door = rng.randint(r0, max(r0, r1 - 2))
            grid[door:door + 3, c] = FREE
    return grid


def maze(rows: int, cols: int, seed: int = 0, corridor: int = 4) -> np.ndarray:
    """Depth-first maze carved into a wall-filled grid with wide corridors."""
    rng = random.Random(seed)
    pitch = corridor + 1
    cr = max(1, (rows - 1) // pitch)
    cc = max(1, (cols - 1) // pitch)
    grid = np.full((rows, cols), OCC, dtype=np.uint8)

    def carve(i, j):
        r, c = 1 + i * pitch, 1 + j * pitch
        grid[r:r + corridor, c:c + corridor] = FREE

    visited = {(0, 0)}
    stack = [(0, 0)]
    carve(0, 0)
    while stack:
        i, j = stack[-1]
        nbrs = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= i + di < cr and 0 <= j + dj < cc and (i + di, j + dj) not in visited]
        if not nbrs:
            stack.pop()
            continue
        ni, nj = rng.choice(nbrs)
        r0, c0 = 1 + min(i, ni) * pitch, 1 + min(j, nj) * pitch
        if ni != i:
            grid[r0:r0 + pitch + corridor, c0:c0 + corridor] = FREE
        else:
            grid[r0:r0 + corridor, c0:c0 + pitch + corridor] = FREE
        visited.add((ni, nj))
        carve(ni, nj)
        stack.append((ni, nj))
    return grid


GENERATORS = {"empty": empty, "town": town, "rooms": rooms, "maze": maze}

_CHARS = {".": FREE, "#": OCC, "?": CellState.UNKNOWN}


def load_grid_file(path) -> np.ndarray:
    """Load a P2 PGM file or a text grid where '.' is free and '#' is occupied ('?' marks unknown)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("P2"):
        return np.array(LocalMap.from_pgm(text).cells)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith(";")]
    widths = {len(ln) for ln in lines}
    if len(widths) != 1:
        raise ValueError(f"{path}: grid rows have differing widths {sorted(widths)}")
    try:
        return np.array([[_CHARS[ch] for ch in ln] for ln in lines], dtype=np.uint8)
    except KeyError as exc:
        raise ValueError(f"{path}: unexpected grid character {exc.args[0]!r}") from None


def make_world(generator: str, rows: int, cols: int, seed: int = 0, path=None) -> np.ndarray:
    if generator == "file":
        grid = load_grid_file(path)
        if grid.shape != (rows, cols):
            raise ValueError(f"grid file is {grid.shape[0]}x{grid.shape[1]}, world declares {rows}x{cols}")
        return grid
    try:
        gen = GENERATORS[generator]
    except KeyError:
        raise ValueError(f"unknown world generator {generator!r}; choose from {sorted(GENERATORS)} or 'file'") from None
    return gen(rows, cols, seed)
