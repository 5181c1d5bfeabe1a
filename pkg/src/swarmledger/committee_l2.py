"""Layer-2 committee chains with quorum-gated blocks and asynchronous cross-chain calls.

BFT agreement inside a committee is abstracted to its availability condition:
a block commits exactly when at least ``N - f`` signing members sit in one
partition component.  Cross-chain calls wait in the source outbox until both
committees hold a quorum inside the same component, are executed in the
target's next block, and are acknowledged back to the source the same way.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from ._hashing import ZERO_HASH, sha256_hex
from .grid_map import CompareConfig, World
from .mapping_contract import (
    AGENT,
    CONTROLLER,
    AgentSwarmState,
    ContractCall,
    ControllerSwarmState,
    Receipt,
    execute,
    transfer_ack_call,
)

ACK = "__ack__"


@dataclass(frozen=True)
class Committee:
    chain_id: str
    members: tuple[str, ...]
    f: int = 0
    withholding: frozenset = frozenset()

    def __post_init__(self):
        members = tuple(sorted(set(self.members)))
        if len(members) != len(self.members):
            raise ValueError(f"committee {self.chain_id} lists a member twice")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "withholding", frozenset(self.withholding))
        if self.f < 0:
            raise ValueError("fault budget must be non-negative")
        if len(members) < 3 * self.f + 1:
            raise ValueError(
                f"committee {self.chain_id} has {len(members)} members, needs >= {3 * self.f + 1} for f={self.f}"
            )
        if not self.withholding <= set(members):
            raise ValueError("withholding members must belong to the committee")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def quorum(self) -> int:
        return self.size - self.f

    def quorum_component(self, components) -> Optional[int]:
        """Index of the component holding a signing quorum, if any."""
        for idx, comp in enumerate(components):
            if len(self.signers_in(comp)) >= self.quorum:
                return idx
        return None

    def signers_in(self, component) -> list[str]:
        return [m for m in self.members if m in component and m not in self.withholding]


@dataclass(frozen=True)
class LatencyConfig:
    confirmation_delay: int = 10
    seconds_per_tick: float = 1.0

    def __post_init__(self):
        if self.confirmation_delay < 0:
            raise ValueError("confirmation_delay must be >= 0")
        if self.seconds_per_tick <= 0:
            raise ValueError("seconds_per_tick must be positive")


@dataclass(frozen=True)
class Block:
    chain_id: str
    height: int
    prev_state_hash: str
    calls: tuple[ContractCall, ...]
    new_state_hash: str
    signers: tuple[str, ...]
    commit_tick: int
    confirm_tick: int

    @property
    def leader(self) -> str:
        return self.signers[0]

    def dump_line(self) -> str:
        return " ".join([
            self.chain_id, str(self.height), self.prev_state_hash, self.new_state_hash,
            str(len(self.calls)), ",".join(self.signers), str(self.commit_tick), str(self.confirm_tick),
        ])


def chain_state_hash(prev_state_hash: str, calls) -> str:
    return sha256_hex(prev_state_hash.encode(), *(c.to_bytes() for c in calls))


class CallStatus(enum.Enum):
    PENDING = "Pending"
    DELIVERED = "Delivered"
    ACKED = "Acked"


@dataclass
class AsyncCall:
    source_chain: str
    target_chain: str
    function: str
    payload: bytes
    eligible_tick: int = 0
    status: CallStatus = CallStatus.PENDING
    delivered_tick: Optional[int] = None
    call_id: str = field(init=False)

    def __post_init__(self):
        self.call_id = sha256_hex(
            b"async", self.source_chain.encode(), self.target_chain.encode(), self.function.encode(), self.payload
        )

    @property
    def is_ack(self) -> bool:
        return self.function == ACK


@dataclass
class DeliveryEvent:
    tick: int
    call_id: str
    source_chain: str
    target_chain: str
    function: str
    nbytes: int
    duplicate: bool = False


def contract_name(state) -> str:
    if isinstance(state, ControllerSwarmState):
        return CONTROLLER
    if isinstance(state, AgentSwarmState):
        return AGENT
    raise TypeError(f"unsupported contract state {type(state).__name__}")


def genesis_doc(state) -> dict:
    if isinstance(state, ControllerSwarmState):
        cfg = state.compare_cfg
        return {
            "contract": CONTROLLER,
            "world": [state.world.rows, state.world.cols],
            "compare": [cfg.window_side, cfg.unknown_threshold, cfg.conflict_threshold],
        }
    return {"contract": AGENT, "controller_chain": state.controller_chain}


def state_from_genesis_doc(doc: dict):
    if doc["contract"] == CONTROLLER:
        return ControllerSwarmState(World(*doc["world"]), CompareConfig(*doc["compare"]))
    if doc["contract"] == AGENT:
        return AgentSwarmState(doc["controller_chain"])
    raise ValueError(f"unknown contract {doc['contract']!r}")


class ChainRuntime:
    """One committee chain: its blocks, contract state and cross-chain queues."""

    def __init__(self, committee: Committee, genesis_state, latency: LatencyConfig = LatencyConfig()):
        self.committee = committee
        self.latency = latency
        self.genesis_state = genesis_state.copy()
        self.contract_state = genesis_state.copy()
        self.blocks: list[Block] = []
        self.receipts: list[tuple[int, ContractCall, Receipt]] = []
        self.snapshots: list[tuple[int, int, object]] = []
        self.outbox: list[AsyncCall] = []
        self.inbox: list[AsyncCall] = []
        self.sent: dict[str, AsyncCall] = {}
        self.executed_calls: set[str] = set()

    @property
    def chain_id(self) -> str:
        return self.committee.chain_id

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def head_hash(self) -> str:
        return self.blocks[-1].new_state_hash if self.blocks else ZERO_HASH

    def has_work(self) -> bool:
        return bool(self.inbox)

    def confirmed_state(self, now: int):
        """Contract state as of the latest block confirmed at ``now``."""
        state = self.genesis_state
        for _, confirm_tick, snap in self.snapshots:
            if confirm_tick > now:
                break
            state = snap
        return state

    def confirmed_height(self, now: int) -> int:
        return sum(1 for b in self.blocks if b.confirm_tick <= now)

    def unacked(self) -> list[AsyncCall]:
        return [c for c in self.sent.values() if not c.is_ack and c.status is not CallStatus.ACKED]

    def _inbox_calls(self) -> list[ContractCall]:
        calls = []
        for ac in self.inbox:
            if ac.is_ack:
                doc = json.loads(ac.payload)
                original = self.sent.get(doc["call_id"])
                payload = original.payload if original is not None else b""
                calls.append(transfer_ack_call(doc["call_id"], doc["status"], payload))
            else:
                calls.append(ContractCall(contract_name(self.contract_state), ac.function, ac.payload))
        return calls

    def _emit(self, target: str, function: str, payload: bytes, eligible_tick: int) -> None:
        ac = AsyncCall(self.chain_id, target, function, payload, eligible_tick)
        existing = self.sent.get(ac.call_id)
        if existing is not None and existing.status is CallStatus.PENDING:
            return
        if existing is not None and not ac.is_ack and existing.status is not CallStatus.ACKED:
            # already delivered, acknowledgment still travelling
            return
        self.sent[ac.call_id] = ac
        self.outbox.append(ac)


def try_commit_block(rt: ChainRuntime, calls, components, now: int,
                     anchor: Optional[Callable[[str, str, int, str, int], None]] = None) -> bool:
    """Commit one block with ``calls`` plus any delivered cross-chain calls.

    Succeeds only when a signing quorum shares a component at ``now``.  On
    failure nothing changes.  ``anchor(leader, chain_id, height, state_hash,
    now)`` is invoked for each committed block.
    """
    idx = rt.committee.quorum_component(components)
    if idx is None:
        return False
    inbound = list(rt.inbox)
    block_calls = list(calls) + rt._inbox_calls()
    if not block_calls:
        return False
    signers = tuple(rt.committee.signers_in(components[idx]))
    height = rt.height + 1
    confirm_tick = now + rt.latency.confirmation_delay
    n_local = len(block_calls) - len(inbound)
    for i, call in enumerate(block_calls):
        receipt = execute(rt.contract_state, call)
        rt.receipts.append((height, call, receipt))
        for em in receipt.emitted:
            rt._emit(em.target_chain, em.function, em.payload, confirm_tick)
        if i >= n_local:
            ac = inbound[i - n_local]
            rt.executed_calls.add(ac.call_id)
            if not ac.is_ack:
                status = "ok" if receipt.ok else f"error: {receipt.error}"
                ack_doc = {"call_id": ac.call_id, "status": status}
                rt._emit(ac.source_chain, ACK, json.dumps(ack_doc, sort_keys=True).encode(), confirm_tick)
    rt.inbox.clear()
    block = Block(
        chain_id=rt.chain_id,
        height=height,
        prev_state_hash=rt.head_hash,
        calls=tuple(block_calls),
        new_state_hash=chain_state_hash(rt.head_hash, block_calls),
        signers=signers,
        commit_tick=now,
        confirm_tick=confirm_tick,
    )
    rt.blocks.append(block)
    rt.snapshots.append((height, confirm_tick, rt.contract_state.copy()))
    if anchor is not None:
        anchor(block.leader, rt.chain_id, height, block.new_state_hash, now)
    return True


def dispatch_async_calls(runtimes: dict, components, now: int) -> list[DeliveryEvent]:
    """Move every eligible outbox call whose two committees share a quorum component."""
    events = []
    quorum_at = {cid: rt.committee.quorum_component(components) for cid, rt in runtimes.items()}
    for cid in sorted(runtimes):
        rt = runtimes[cid]
        keep = []
        for ac in rt.outbox:
            if ac.target_chain not in runtimes:
                raise KeyError(f"chain {cid} calls unknown chain {ac.target_chain}")
            src_q = quorum_at[cid]
            dst_q = quorum_at[ac.target_chain]
            if ac.eligible_tick > now or src_q is None or src_q != dst_q:
                keep.append(ac)
                continue
            target = runtimes[ac.target_chain]
            duplicate = ac.call_id in target.executed_calls or any(x.call_id == ac.call_id for x in target.inbox)
            ac.delivered_tick = now
            if ac.is_ack:
                ac.status = CallStatus.ACKED
                original = target.sent.get(json.loads(ac.payload)["call_id"])
                if original is not None:
                    original.status = CallStatus.ACKED
            else:
                ac.status = CallStatus.DELIVERED
            if not duplicate:
                target.inbox.append(ac)
            events.append(DeliveryEvent(now, ac.call_id, cid, ac.target_chain, ac.function, len(ac.payload), duplicate))
        rt.outbox = keep
    return events


@dataclass
class ReplayResult:
    ok: bool
    divergent_height: Optional[int] = None
    message: str = ""

    def __bool__(self):
        return self.ok


def replay_blocks(genesis_state, blocks) -> tuple[ReplayResult, object]:
    state = genesis_state.copy()
    prev = ZERO_HASH
    for expected_height, block in enumerate(blocks, start=1):
        if block.height != expected_height:
            return ReplayResult(False, block.height, f"expected height {expected_height}, found {block.height}"), state
        if block.prev_state_hash != prev:
            return ReplayResult(False, block.height, "prev_state_hash does not link to predecessor"), state
        if chain_state_hash(prev, block.calls) != block.new_state_hash:
            return ReplayResult(False, block.height, "calls do not reproduce new_state_hash"), state
        for call in block.calls:
            execute(state, call)
        prev = block.new_state_hash
    return ReplayResult(True), state


def replay_verify(rt: ChainRuntime) -> ReplayResult:
    """Re-execute every block from genesis and compare hashes and final contract state."""
    result, state = replay_blocks(rt.genesis_state, rt.blocks)
    if not result:
        return result
    if state.digest() != rt.contract_state.digest():
        return ReplayResult(False, rt.height, "replayed contract state differs from live state")
    return result


def dump_chain(rt: ChainRuntime) -> tuple[str, str]:
    """(block dump, call dump) in the line-delimited on-disk formats."""
    header = (
        f"# genesis {json.dumps(genesis_doc(rt.genesis_state), sort_keys=True)}\n"
        f"# committee {json.dumps({'members': list(rt.committee.members), 'f': rt.committee.f}, sort_keys=True)}\n"
    )
    blocks = header + "".join(b.dump_line() + "\n" for b in rt.blocks)
    calls = "".join(
        f"{b.height} {i} {c.contract} {c.function} {c.payload.hex() or '-'}\n"
        for b in rt.blocks for i, c in enumerate(b.calls)
    )
    return blocks, calls


def load_chain(block_text: str, call_text: str):
    """Parse dumps back into (genesis_state, blocks).  Malformed call lines raise ValueError."""
    genesis = None
    rows = []
    for line in block_text.splitlines():
        if line.startswith("# genesis "):
            genesis = state_from_genesis_doc(json.loads(line[len("# genesis "):]))
        elif line.strip() and not line.startswith("#"):
            rows.append(line.split())
    if genesis is None:
        raise ValueError("chain dump lacks a genesis header")
    calls: dict[int, list[ContractCall]] = {}
    for line in call_text.splitlines():
        if not line.strip():
            continue
        height, _idx, contract, function, payload_hex = line.split()
        payload = b"" if payload_hex == "-" else bytes.fromhex(payload_hex)
        calls.setdefault(int(height), []).append(ContractCall(contract, function, payload))
    blocks = []
    for chain_id, height, prev, new, n_calls, signers, commit, confirm in rows:
        block_calls = tuple(calls.get(int(height), ()))
        if len(block_calls) != int(n_calls):
            raise ValueError(f"block {height} lists {n_calls} calls, call dump has {len(block_calls)}")
        blocks.append(Block(chain_id, int(height), prev, block_calls, new, tuple(signers.split(",")),
                            int(commit), int(confirm)))
    return genesis, blocks
