"""Built-in scenarios shared by the command line and the acceptance tests."""

from __future__ import annotations

import random

from ..grid_map import CompareConfig, Rect
from ..mapping_contract import AGENT, CONTROLLER, AllocationConfig
from ..netsim import PartitionSchedule
from .scenario import AgentSpec, ChainSpec, ScenarioConfig, ScheduleSpec, WorldSpec
from .sensing import ByzantineModel


def minimal(seed: int = 0) -> ScenarioConfig:
    """Four honest agents, every region mapped by all of them, no partitions."""
    agents = tuple(AgentSpec(f"a{i}") for i in range(4))
    ids = [a.id for a in agents]
    return ScenarioConfig(
        world=WorldSpec(32, 32, "town", seed=1),
        agents=agents,
        schedule=ScheduleSpec(PartitionSchedule.connected_all(ids + ["station"]), drain_ticks=60),
        committees=(
            ChainSpec("agents", AGENT, tuple(ids), f=1),
            ChainSpec("controller", CONTROLLER, ("station",)),
        ),
        allocation=AllocationConfig(4, 1, 0),
        compare=CompareConfig(window_side=4),
        seed=seed,
    )


def _detectable_allocation(agents, byzantine, n_regions, k, f, start=0):
    """Lowest allocation seed giving every byzantine agent a region and no region more than f of them."""
    candidates = sorted(agents)
    for rng_seed in range(start, start + 10_000):
        rng = random.Random(rng_seed)
        groups = [set(rng.sample(candidates, k)) for _ in range(n_regions)]
        if all(len(g & byzantine) <= f for g in groups) and all(any(b in g for g in groups) for b in byzantine):
            return rng_seed
    raise RuntimeError("no detectable allocation found")


def gazebo_analog(seed: int = 0) -> ScenarioConfig:
    """64x64 town split over two subnets; the two byzantine agents submit before everyone else."""
    ids = [f"a{i}" for i in range(8)]
    byzantine = {"a1", "a6"}
    rng_seed = _detectable_allocation(ids, byzantine, 4, 4, 1)
    agents = tuple(
        AgentSpec(a, byzantine=a in byzantine, submit_tick=1 if a in byzantine else 40)
        for a in ids
    )
    stations = ("s0", "s1", "s2", "s3")
    return ScenarioConfig(
        world=WorldSpec(64, 64, "town", seed=7, region_grid=(2, 2)),
        agents=agents,
        schedule=ScheduleSpec(PartitionSchedule.connected_all(ids + list(stations)), drain_ticks=60),
        committees=(
            ChainSpec("subnet0", AGENT, tuple(ids[:4]), f=1),
            ChainSpec("subnet1", AGENT, tuple(ids[4:]), f=1),
            ChainSpec("controller", CONTROLLER, stations, f=1),
        ),
        byzantine_model=ByzantineModel(count=(1, 2), wall_length=(8, 12), seed=3, require_detectable=True),
        allocation=AllocationConfig(4, 1, rng_seed),
        compare=CompareConfig(window_side=4),
        seed=seed,
    )


MAZE_REGIONS = {
    "a0": Rect(0, 0, 30, 30),
    "a1": Rect(10, 10, 20, 20),
    "a2": Rect(10, 0, 30, 30),
    "a3": Rect(0, 10, 40, 30),
}


def maze_analog(seed: int = 0) -> ScenarioConfig:
    """Agent a1 is byzantine; a3 is cut off while it submits and rejoins at the end."""
    ids = sorted(MAZE_REGIONS)
    submit = {"a0": 5, "a1": 6, "a2": 7, "a3": 5}
    agents = tuple(
        AgentSpec(a, regions=(MAZE_REGIONS[a],), byzantine=a == "a1", submit_tick=submit[a], chain="r3" if a == "a3" else "main")
        for a in ids
    )
    nodes = ids + ["station"]
    schedule = PartitionSchedule([
        (0, [nodes]),
        (2, [["a0", "a1", "a2", "station"], ["a3"]]),
        (50, [nodes]),
    ])
    return ScenarioConfig(
        world=WorldSpec(40, 40, "maze", seed=5),
        agents=agents,
        schedule=ScheduleSpec(schedule, drain_ticks=60),
        committees=(
            ChainSpec("main", AGENT, ("a0", "a1", "a2")),
            ChainSpec("r3", AGENT, ("a3",)),
            ChainSpec("controller", CONTROLLER, ("station",)),
        ),
        byzantine_model=ByzantineModel(count=(1, 1), wall_length=(8, 12), seed=11),
        compare=CompareConfig(window_side=4),
        seed=seed,
    )


BUILTIN = {"minimal": minimal, "gazebo_analog": gazebo_analog, "maze_analog": maze_analog}
