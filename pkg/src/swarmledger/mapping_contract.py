"""AgentSwarm / ControllerSwarm contract state machines for collaborative mapping.

Votes are local maps.  Agents store votes on their own chain (AgentSwarm) and
forward them asynchronously to the controller chain (ControllerSwarm), which
cross-checks every new map against earlier overlapping ones and aggregates the
non-byzantine maps into a world map.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from ._hashing import pack_fields, sha256_hex, unpack_fields
from .grid_map import CellState, CompareConfig, LocalMap, Rect, World, compare_maps, intersect, map_coverage

CONTROLLER = "ControllerSwarm"
AGENT = "AgentSwarm"


class ContractError(Exception):
    """A contract call was rejected; the contract state is unchanged."""


@dataclass(frozen=True)
class AllocationConfig:
    k: int
    f: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.f < 0 or self.k < 1:
            raise ValueError("k must be positive and f non-negative")
        if self.k < 3 * self.f + 1:
            raise ValueError(f"replication k={self.k} cannot tolerate f={self.f} (need k >= {3 * self.f + 1})")


@dataclass(frozen=True, eq=False)
class Vote:
    agent_id: str
    region: Optional[Rect]
    payload: LocalMap

    @cached_property
    def vote_id(self) -> str:
        return sha256_hex(b"vote", self.agent_id.encode(), _region_bytes(self.region), self.payload.to_bytes())

    def __eq__(self, other):
        return isinstance(other, Vote) and self.vote_id == other.vote_id

    def __hash__(self):
        return hash(self.vote_id)

    def to_bytes(self) -> bytes:
        return pack_fields(self.agent_id.encode(), _region_bytes(self.region), self.payload.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Vote":
        agent, region, payload = unpack_fields(data, 3)
        return cls(agent.decode(), _region_from_bytes(region), LocalMap.from_bytes(payload))


def _region_bytes(region: Optional[Rect]) -> bytes:
    return b"" if region is None else json.dumps(region.as_list()).encode()


def _region_from_bytes(data: bytes) -> Optional[Rect]:
    return None if not data else Rect(*json.loads(data))


def encode_votes(votes) -> bytes:
    return pack_fields(*(v.to_bytes() for v in votes))


def decode_votes(data: bytes) -> list[Vote]:
    return [Vote.from_bytes(chunk) for chunk in unpack_fields(data)]


@dataclass
class SubmissionRecord:
    vote: Vote
    complied: int
    contracted: int
    submission_index: int

    @property
    def flagged(self) -> bool:
        return self.complied < self.contracted


@dataclass
class MergeResult:
    global_map: LocalMap
    byzantine: frozenset
    flagged_indices: tuple[int, ...]


@dataclass
class ControllerSwarmState:
    world: World
    compare_cfg: CompareConfig = field(default_factory=CompareConfig)
    submissions: list[SubmissionRecord] = field(default_factory=list)
    registered_agents: set[str] = field(default_factory=set)
    assignment: dict[Rect, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self._seen = {rec.vote.vote_id for rec in self.submissions}

    def register_agent(self, agent: str) -> None:
        if agent in self.registered_agents:
            raise ContractError(f"agent {agent!r} is already registered")
        self.registered_agents.add(agent)

    def allocate_roles(self, regions, cfg: AllocationConfig) -> None:
        """Assign exactly ``cfg.k`` distinct registered agents to every region.

        Agents are drawn without replacement per region from the sorted agent
        list with a PRNG seeded by ``cfg.rng_seed``.
        """
        candidates = sorted(self.registered_agents)
        if len(candidates) < cfg.k:
            raise ContractError(
                f"insufficient agents: need k={cfg.k}, have {len(candidates)} "
                f"(short by {cfg.k - len(candidates)})"
            )
        rng = random.Random(cfg.rng_seed)
        assignment = {}
        for region in regions:
            if not self.world.bounds().contains(region):
                raise ContractError(f"region {region} is outside the world")
            assignment[region] = tuple(sorted(rng.sample(candidates, cfg.k)))
        self.assignment = assignment

    def submit_map(self, vote: Vote) -> SubmissionRecord:
        if vote.agent_id not in self.registered_agents:
            raise ContractError(f"agent {vote.agent_id!r} is not registered")
        if vote.vote_id in self._seen:
            raise ContractError(f"duplicate vote {vote.vote_id[:12]}")
        if not vote.payload.within(self.world):
            raise ContractError(f"map {vote.payload.rect} lies outside the world")
        complies = contracts = 0
        for prior in self.submissions:
            if intersect(vote.payload, prior.vote.payload) is None:
                continue
            if compare_maps(vote.payload, prior.vote.payload, self.compare_cfg):
                complies += 1
                prior.complied += 1
            else:
                contracts += 1
                prior.contracted += 1
        record = SubmissionRecord(vote, complies, contracts, len(self.submissions))
        self.submissions.append(record)
        self._seen.add(vote.vote_id)
        return record

    def submit_votes(self, votes) -> list[str]:
        """Apply ``submit_map`` to each vote in order; returns one error string per rejected vote."""
        errors = []
        for vote in votes:
            try:
                self.submit_map(vote)
            except ContractError as exc:
                errors.append(str(exc))
        return errors

    def has_vote(self, vote_id: str) -> bool:
        return vote_id in self._seen

    def byzantine_agents(self) -> frozenset:
        return frozenset(rec.vote.agent_id for rec in self.submissions if rec.flagged)

    def merge(self) -> MergeResult:
        """Per-cell majority over known values of maps from non-byzantine agents."""
        byzantine = self.byzantine_agents()
        free = np.zeros((self.world.rows, self.world.cols), dtype=np.int32)
        occ = np.zeros_like(free)
        for rec in self.submissions:
            if rec.vote.agent_id in byzantine:
                continue
            m = rec.vote.payload
            r, c = m.origin
            free[r:r + m.rows, c:c + m.cols] += m.cells == CellState.FREE
            occ[r:r + m.rows, c:c + m.cols] += m.cells == CellState.OCCUPIED
        cells = np.full(free.shape, CellState.UNKNOWN, dtype=np.uint8)
        cells[free > occ] = CellState.FREE
        cells[occ > free] = CellState.OCCUPIED
        flagged = tuple(rec.submission_index for rec in self.submissions if rec.flagged)
        return MergeResult(LocalMap((0, 0), cells), byzantine, flagged)

    def merge_report(self) -> list[dict]:
        """Per-agent complied/contracted totals, flag status and coverage (percent)."""
        byzantine = self.byzantine_agents()
        rows = []
        agents = sorted(self.registered_agents | {r.vote.agent_id for r in self.submissions})
        for agent in agents:
            recs = [r for r in self.submissions if r.vote.agent_id == agent]
            rows.append({
                "agent_id": agent,
                "maps": len(recs),
                "complied": sum(r.complied for r in recs),
                "contracted": sum(r.contracted for r in recs),
                "flagged": agent in byzantine,
                "coverage_pct": 100.0 * map_coverage(combine_maps([r.vote.payload for r in recs], self.world), self.world),
            })
        return rows

    def vote_ids(self) -> list[str]:
        return [rec.vote.vote_id for rec in self.submissions]

    def copy(self) -> "ControllerSwarmState":
        return ControllerSwarmState(
            world=self.world,
            compare_cfg=self.compare_cfg,
            submissions=[SubmissionRecord(r.vote, r.complied, r.contracted, r.submission_index) for r in self.submissions],
            registered_agents=set(self.registered_agents),
            assignment=dict(self.assignment),
        )

    def digest(self) -> str:
        doc = {
            "world": [self.world.rows, self.world.cols],
            "compare": [self.compare_cfg.window_side, self.compare_cfg.unknown_threshold, self.compare_cfg.conflict_threshold],
            "agents": sorted(self.registered_agents),
            "assignment": sorted([region.as_list(), list(agents)] for region, agents in self.assignment.items()),
            "submissions": [[r.vote.vote_id, r.complied, r.contracted, r.submission_index] for r in self.submissions],
        }
        return sha256_hex(CONTROLLER.encode(), json.dumps(doc, sort_keys=True).encode())


def combine_maps(maps, world: World) -> LocalMap:
    """Overlay maps into one world-sized map (later known cells win)."""
    cells = np.zeros((world.rows, world.cols), dtype=np.uint8)
    for m in maps:
        r, c = m.origin
        target = cells[r:r + m.rows, c:c + m.cols]
        known = m.cells != CellState.UNKNOWN
        target[known] = m.cells[known]
    return LocalMap((0, 0), cells)


@dataclass
class AgentSwarmState:
    controller_chain: str
    pending_votes: list[Vote] = field(default_factory=list)
    transferred: set[str] = field(default_factory=set)

    def submit_vote(self, vote: Vote) -> bool:
        """Store a vote; returns False when it was already stored."""
        if any(v.vote_id == vote.vote_id for v in self.pending_votes):
            return False
        self.pending_votes.append(vote)
        return True

    def untransferred(self) -> list[Vote]:
        return [v for v in self.pending_votes if v.vote_id not in self.transferred]

    def transfer_votes(self) -> list[Vote]:
        """Votes to forward to the controller; marking waits for the acknowledgment."""
        return self.untransferred()

    def acknowledge(self, vote_ids) -> None:
        known = {v.vote_id for v in self.pending_votes}
        self.transferred.update(vid for vid in vote_ids if vid in known)

    def copy(self) -> "AgentSwarmState":
        return AgentSwarmState(self.controller_chain, list(self.pending_votes), set(self.transferred))

    def digest(self) -> str:
        doc = {
            "controller": self.controller_chain,
            "pending": [v.vote_id for v in self.pending_votes],
            "transferred": sorted(self.transferred),
        }
        return sha256_hex(AGENT.encode(), json.dumps(doc, sort_keys=True).encode())


# ---------------------------------------------------------------------------
# call encoding and dispatch


@dataclass(frozen=True)
class ContractCall:
    contract: str
    function: str
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        return pack_fields(self.contract.encode(), self.function.encode(), self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ContractCall":
        contract, function, payload = unpack_fields(data, 3)
        return cls(contract.decode(), function.decode(), payload)

    @property
    def call_hash(self) -> str:
        return sha256_hex(self.to_bytes())


@dataclass
class Emit:
    """Cross-chain call requested by a contract during execution."""

    target_chain: str
    function: str
    payload: bytes


@dataclass
class Receipt:
    ok: bool
    error: str = ""
    emitted: list[Emit] = field(default_factory=list)


def register_call(agent: str) -> ContractCall:
    return ContractCall(CONTROLLER, "registerAgent", agent.encode())


def allocate_call(regions, cfg: AllocationConfig) -> ContractCall:
    doc = {"regions": [r.as_list() for r in regions], "k": cfg.k, "f": cfg.f, "rng_seed": cfg.rng_seed}
    return ContractCall(CONTROLLER, "allocateRoles", json.dumps(doc, sort_keys=True).encode())


def submit_map_call(vote: Vote) -> ContractCall:
    return ContractCall(CONTROLLER, "submitMap", vote.to_bytes())


def submit_vote_call(vote: Vote) -> ContractCall:
    return ContractCall(AGENT, "submitVote", vote.to_bytes())


def transfer_call() -> ContractCall:
    return ContractCall(AGENT, "transferVotes", b"")


def execute(state, call: ContractCall) -> Receipt:
    """Apply one call to a contract state.  Rejected calls leave the state unchanged."""
    try:
        if isinstance(state, ControllerSwarmState):
            return _execute_controller(state, call)
        if isinstance(state, AgentSwarmState):
            return _execute_agent(state, call)
        raise ContractError(f"unsupported contract state {type(state).__name__}")
    except (ContractError, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        return Receipt(False, f"{call.function}: {exc}")


def _execute_controller(state: ControllerSwarmState, call: ContractCall) -> Receipt:
    if call.contract != CONTROLLER:
        raise ContractError(f"call for {call.contract} sent to {CONTROLLER}")
    if call.function == "registerAgent":
        state.register_agent(call.payload.decode())
    elif call.function == "allocateRoles":
        doc = json.loads(call.payload)
        cfg = AllocationConfig(doc["k"], doc["f"], doc["rng_seed"])
        state.allocate_roles([Rect(*r) for r in doc["regions"]], cfg)
    elif call.function == "submitMap":
        state.submit_map(Vote.from_bytes(call.payload))
    elif call.function == "submitVotes":
        errors = state.submit_votes(decode_votes(call.payload))
        return Receipt(True, "; ".join(errors))
    else:
        raise ContractError(f"unknown function {call.function!r}")
    return Receipt(True)


def _execute_agent(state: AgentSwarmState, call: ContractCall) -> Receipt:
    if call.contract != AGENT:
        raise ContractError(f"call for {call.contract} sent to {AGENT}")
    if call.function == "submitVote":
        state.submit_vote(Vote.from_bytes(call.payload))
    elif call.function == "transferVotes":
        votes = state.transfer_votes()
        if votes:
            return Receipt(True, emitted=[Emit(state.controller_chain, "submitVotes", encode_votes(votes))])
    elif call.function == "transferAck":
        doc = json.loads(call.payload)
        if doc["status"] == "ok":
            state.acknowledge(doc["vote_ids"])
        else:
            return Receipt(True, f"transfer {doc['call_id'][:12]} failed at target: {doc['status']}")
    else:
        raise ContractError(f"unknown function {call.function!r}")
    return Receipt(True)


def transfer_ack_call(call_id: str, status: str, original_payload: bytes) -> ContractCall:
    """Agent-side call recording the controller's acknowledgment of a vote transfer."""
    try:
        vote_ids = [v.vote_id for v in decode_votes(original_payload)]
    except ValueError:
        vote_ids = []
    doc = {"call_id": call_id, "status": status, "vote_ids": vote_ids}
    return ContractCall(AGENT, "transferAck", json.dumps(doc, sort_keys=True).encode())
