"""Random map generators shared by the property tests."""

import numpy as np
from hypothesis import strategies as st

from swarmledger.grid_map import LocalMap


def random_map(rng, world_rows, world_cols, p_unknown=0.2, max_side=None):
    rows = int(rng.integers(1, (max_side or world_rows) + 1))
    cols = int(rng.integers(1, (max_side or world_cols) + 1))
    rows, cols = min(rows, world_rows), min(cols, world_cols)
    r0 = int(rng.integers(0, world_rows - rows + 1))
    c0 = int(rng.integers(0, world_cols - cols + 1))
    cells = rng.choice([0, 1, 2], size=(rows, cols), p=[p_unknown, (1 - p_unknown) / 2, (1 - p_unknown) / 2])
    return LocalMap((r0, c0), cells.astype(np.uint8))


def perturbed(rng, m, flip_fraction):
    """Copy of ``m`` with roughly ``flip_fraction`` of its cells reassigned at random."""
    cells = np.array(m.cells)
    mask = rng.random(cells.shape) < flip_fraction
    cells[mask] = rng.choice([0, 1, 2], size=int(mask.sum()))
    return LocalMap(m.origin, cells)


@st.composite
def map_pairs(draw, max_world=32):
    """Two maps in a shared world, the second often a perturbed copy overlapping the first."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    rows = draw(st.integers(1, max_world))
    cols = draw(st.integers(1, max_world))
    a = random_map(rng, rows, cols, p_unknown=draw(st.sampled_from([0.0, 0.1, 0.3])))
    if draw(st.booleans()):
        b = random_map(rng, rows, cols)
    else:
        b = perturbed(rng, a, draw(st.sampled_from([0.0, 0.05, 0.2, 0.5])))
    return a, b


def random_views(seed, count=3, max_steps=12):
    """``count`` views grown from one shared history with random issues and pairwise syncs."""
    import random as _random

    from swarmledger.ledger_l1 import TangleView, sync_views

    rng = _random.Random(seed)
    base = TangleView()
    for t in range(rng.randrange(4)):
        base.dump_data("n0", bytes([t]), t, rng)
    views = [base.copy() for _ in range(count)]
    for step in range(rng.randrange(max_steps)):
        i = rng.randrange(count)
        if rng.random() < 0.25:
            j = rng.randrange(count)
            views[i] = sync_views(views[i], views[j])
        else:
            views[i].dump_data(f"n{i}", rng.randbytes(4), 10 + step, rng)
    return views
