"""Independent reference implementations used as test oracles.

These deliberately avoid numpy views and the package's tiling helpers:
cells are addressed one at a time through plain dictionaries.
"""

UNKNOWN, FREE, OCCUPIED = 0, 1, 2


def cell_dict(m):
    r0, c0 = m.origin
    return {(r0 + i, c0 + j): int(m.cells[i, j]) for i in range(m.cells.shape[0]) for j in range(m.cells.shape[1])}


def brute_overlap_cells(a, b):
    return set(cell_dict(a)) & set(cell_dict(b))


def brute_window_stats(da, db, cells):
    S = sum(1 for p in cells if da[p] != UNKNOWN and da[p] == db[p])
    D = sum(1 for p in cells if da[p] != UNKNOWN and db[p] != UNKNOWN and da[p] != db[p])
    U = sum(1 for p in cells if da[p] == UNKNOWN)
    Up = sum(1 for p in cells if db[p] == UNKNOWN)
    return S, D, U, Up, len(cells)


def brute_windows(shared, n):
    """Group shared cells into n x n windows aligned at the top-left shared cell."""
    if not shared:
        return []
    r0 = min(r for r, _ in shared)
    c0 = min(c for _, c in shared)
    groups = {}
    for r, c in shared:
        groups.setdefault(((r - r0) // n, (c - c0) // n), set()).add((r, c))
    return [groups[k] for k in sorted(groups)]


def brute_conflict(S, D, U, Up, cc, t, tp):
    return U / cc < t and Up / cc < t and D + S > 0 and D / (D + S) > tp


def brute_compare(a, b, n=8, t=0.2, tp=0.2):
    da, db = cell_dict(a), cell_dict(b)
    shared = set(da) & set(db)
    for window in brute_windows(shared, n):
        if brute_conflict(*brute_window_stats(da, db, window), t, tp):
            return False
    return True


def brute_coverage(m, world_rows, world_cols):
    return sum(1 for v in cell_dict(m).values() if v != UNKNOWN) / (world_rows * world_cols)


def majority_merge(maps, rows, cols):
    """Per-cell majority over known values; ties and no data stay Unknown."""
    dicts = [cell_dict(m) for m in maps]
    out = {}
    for r in range(rows):
        for c in range(cols):
            vals = [d.get((r, c), UNKNOWN) for d in dicts]
            free, occ = vals.count(FREE), vals.count(OCCUPIED)
            out[(r, c)] = FREE if free > occ else OCCUPIED if occ > free else UNKNOWN
    return out
