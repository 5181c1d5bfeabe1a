"""Scenario files: JSON documents mirroring :class:`ScenarioConfig`, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ..committee_l2 import Committee, LatencyConfig
from ..grid_map import CompareConfig, Rect, World
from ..mapping_contract import AGENT, CONTROLLER, AllocationConfig
from ..netsim import ConfigError, PartitionSchedule
from .sensing import ByzantineModel


@dataclass(frozen=True)
class WorldSpec:
    rows: int
    cols: int
    generator: str = "town"
    seed: int = 0
    path: Optional[str] = None
    region_grid: tuple[int, int] = (2, 2)

    @property
    def world(self) -> World:
        return World(self.rows, self.cols)

    def regions(self) -> list[Rect]:
        """Tiling of the world into ``region_grid`` rows x cols regions (row-major)."""
        gr, gc = self.region_grid
        rb = [self.rows * i // gr for i in range(gr + 1)]
        cb = [self.cols * j // gc for j in range(gc + 1)]
        return [Rect(rb[i], cb[j], rb[i + 1] - rb[i], cb[j + 1] - cb[j]) for i in range(gr) for j in range(gc)]


@dataclass(frozen=True)
class AgentSpec:
    id: str
    regions: Union[str, tuple] = "auto"
    byzantine: bool = False
    submit_tick: int = 1
    dump_rate_hz: float = 0.0
    dump_bytes: int = 1536
    chain: Optional[str] = None

    @property
    def auto(self) -> bool:
        return self.regions == "auto"


@dataclass(frozen=True)
class ScheduleSpec:
    entries: PartitionSchedule
    drain_ticks: int = 60


@dataclass(frozen=True)
class ChainSpec:
    chain_id: str
    contract: str
    members: tuple[str, ...]
    f: int = 0
    withholding: tuple[str, ...] = ()
    transfer_interval: int = 1

    def committee(self) -> Committee:
        return Committee(self.chain_id, tuple(self.members), self.f, frozenset(self.withholding))


@dataclass(frozen=True)
class BaselineSpec:
    enabled: bool = True
    block_interval: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldSpec
    agents: tuple[AgentSpec, ...]
    schedule: ScheduleSpec
    committees: tuple[ChainSpec, ...]
    byzantine_model: ByzantineModel = ByzantineModel()
    allocation: AllocationConfig = AllocationConfig(4, 1, 0)
    compare: CompareConfig = CompareConfig()
    latency: LatencyConfig = LatencyConfig()
    baseline: BaselineSpec = BaselineSpec()
    seed: int = 0

    # -- derived views

    @property
    def controller(self) -> ChainSpec:
        return next(c for c in self.committees if c.contract == CONTROLLER)

    def agent_chain(self, agent: AgentSpec) -> ChainSpec:
        if agent.chain is not None:
            return next(c for c in self.committees if c.chain_id == agent.chain)
        return next(c for c in self.committees if c.contract == AGENT and agent.id in c.members)

    @property
    def uses_allocation(self) -> bool:
        return any(a.auto for a in self.agents)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed)

    def without_baseline(self) -> "ScenarioConfig":
        return dataclasses.replace(self, baseline=dataclasses.replace(self.baseline, enabled=False))

    def validate(self) -> None:
        """Static checks; raises ConfigError with a diagnostic."""
        nodes = self.schedule.entries.nodes
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError("agent ids must be unique")
        missing = set(ids) - nodes
        if missing:
            raise ConfigError(f"agents missing from the schedule: {sorted(missing)}")
        controllers = [c for c in self.committees if c.contract == CONTROLLER]
        if len(controllers) != 1:
            raise ConfigError(f"exactly one {CONTROLLER} chain required, found {len(controllers)}")
        chain_ids = [c.chain_id for c in self.committees]
        if len(set(chain_ids)) != len(chain_ids):
            raise ConfigError("chain ids must be unique")
        if "baseline" in chain_ids:
            raise ConfigError("chain id 'baseline' is reserved for the longest-chain comparator dump")
        for spec in self.committees:
            if spec.contract not in (AGENT, CONTROLLER):
                raise ConfigError(f"chain {spec.chain_id}: unknown contract {spec.contract!r}")
            if set(spec.members) - nodes:
                raise ConfigError(f"chain {spec.chain_id}: members not in schedule {sorted(set(spec.members) - nodes)}")
            if spec.transfer_interval < 1:
                raise ConfigError(f"chain {spec.chain_id}: transfer_interval must be >= 1")
            try:
                spec.committee()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for agent in self.agents:
            if agent.chain is not None and agent.chain not in chain_ids:
                raise ConfigError(f"agent {agent.id}: unknown chain {agent.chain}")
            try:
                chain = self.agent_chain(agent)
            except StopIteration:
                raise ConfigError(f"agent {agent.id} belongs to no {AGENT} chain") from None
            if chain.contract != AGENT:
                raise ConfigError(f"agent {agent.id}: chain {chain.chain_id} is not an {AGENT} chain")
            if agent.submit_tick < 0:
                raise ConfigError(f"agent {agent.id}: submit_tick must be >= 0")
            if not agent.auto:
                for r in agent.regions:
                    if not self.world.world.bounds().contains(r) or r.area == 0:
                        raise ConfigError(f"agent {agent.id}: region {r} outside the world")
        autos = {a.auto for a in self.agents}
        if len(autos) > 1:
            raise ConfigError("agents must either all use 'auto' regions or all list explicit regions")
        if self.uses_allocation:
            for r in self.world.regions():
                if r.area == 0:
                    raise ConfigError(f"region grid {self.world.region_grid} yields an empty region")
        if self.schedule.drain_ticks < 0:
            raise ConfigError("drain_ticks must be >= 0")
        if self.baseline.block_interval < 1:
            raise ConfigError("baseline block_interval must be >= 1")

    # -- JSON

    def to_doc(self) -> dict:
        return {
            "world": {
                "rows": self.world.rows, "cols": self.world.cols, "generator": self.world.generator,
                "seed": self.world.seed, "path": self.world.path, "region_grid": list(self.world.region_grid),
            },
            "agents": [
                {
                    "id": a.id,
                    "regions": a.regions if a.auto else [r.as_list() for r in a.regions],
                    "byzantine": a.byzantine, "submit_tick": a.submit_tick, "dump_rate_hz": a.dump_rate_hz,
                    "dump_bytes": a.dump_bytes, "chain": a.chain,
                }
                for a in self.agents
            ],
            "byzantine_model": {
                "count": list(self.byzantine_model.count), "wall_length": list(self.byzantine_model.wall_length),
                "seed": self.byzantine_model.seed, "require_detectable": self.byzantine_model.require_detectable,
            },
            "allocation": {"k": self.allocation.k, "f": self.allocation.f, "rng_seed": self.allocation.rng_seed},
            "compare": {
                "window_side": self.compare.window_side, "unknown_threshold": self.compare.unknown_threshold,
                "conflict_threshold": self.compare.conflict_threshold,
            },
            "schedule": {"entries": self.schedule.entries.to_doc(), "drain_ticks": self.schedule.drain_ticks},
            "committees": [
                {
                    "chain_id": c.chain_id, "contract": c.contract, "members": list(c.members), "f": c.f,
                    "withholding": list(c.withholding), "transfer_interval": c.transfer_interval,
                }
                for c in self.committees
            ],
            "latency": {
                "confirmation_delay": self.latency.confirmation_delay,
                "seconds_per_tick": self.latency.seconds_per_tick,
            },
            "baseline": {"enabled": self.baseline.enabled, "block_interval": self.baseline.block_interval},
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"


def _take(doc, allowed: set, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return doc


def _names(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def from_doc(doc: dict) -> ScenarioConfig:
    _take(doc, _names(ScenarioConfig), "scenario")
    for key in ("world", "agents", "schedule", "committees"):
        if key not in doc:
            raise ConfigError(f"scenario: missing required key {key!r}")
    try:
        w = dict(_take(doc["world"], _names(WorldSpec), "world"))
        if "region_grid" in w:
            w["region_grid"] = tuple(w["region_grid"])
        world = WorldSpec(**w)

        agents = []
        for i, a in enumerate(doc["agents"]):
            a = dict(_take(a, _names(AgentSpec), f"agents[{i}]"))
            if "regions" in a and a["regions"] != "auto":
                a["regions"] = tuple(Rect(*r) for r in a["regions"])
            agents.append(AgentSpec(**a))

        s = _take(doc["schedule"], {"entries", "drain_ticks"}, "schedule")
        entries = []
        for j, e in enumerate(s["entries"]):
            _take(e, {"from_tick", "partition"}, f"schedule.entries[{j}]")
            entries.append((e["from_tick"], e["partition"]))
        schedule = ScheduleSpec(PartitionSchedule(entries), s.get("drain_ticks", 60))

        committees = []
        for j, c in enumerate(doc["committees"]):
            c = dict(_take(c, _names(ChainSpec), f"committees[{j}]"))
            c["members"] = tuple(c["members"])
            c["withholding"] = tuple(c.get("withholding", ()))
            committees.append(ChainSpec(**c))

        kwargs = {}
        if "byzantine_model" in doc:
            kwargs["byzantine_model"] = ByzantineModel(**_take(doc["byzantine_model"], _names(ByzantineModel), "byzantine_model"))
        if "allocation" in doc:
            kwargs["allocation"] = AllocationConfig(**_take(doc["allocation"], _names(AllocationConfig), "allocation"))
        if "compare" in doc:
            kwargs["compare"] = CompareConfig(**_take(doc["compare"], _names(CompareConfig), "compare"))
        if "latency" in doc:
            kwargs["latency"] = LatencyConfig(**_take(doc["latency"], _names(LatencyConfig), "latency"))
        if "baseline" in doc:
            kwargs["baseline"] = BaselineSpec(**_take(doc["baseline"], _names(BaselineSpec), "baseline"))
        if "seed" in doc:
            kwargs["seed"] = int(doc["seed"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    cfg = ScenarioConfig(world, tuple(agents), schedule, tuple(committees), **kwargs)
    cfg.validate()
    return cfg


def load_scenario(path) -> ScenarioConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_doc(doc)
