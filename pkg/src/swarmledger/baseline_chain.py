"""Single-chain comparator with longest-chain fork choice.

Each partition component keeps extending its own head while disconnected.
When views are merged the heaviest fork wins and every call that exists only
on the losing forks is dropped, together with its effect on the contract.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

from ._hashing import ZERO_HASH, sha256_hex
from .mapping_contract import ContractCall, ControllerSwarmState, Vote, execute

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearBlock:
    height: int
    prev_hash: str
    calls: tuple[ContractCall, ...]
    miner: str
    tick: int
    block_hash: str = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "block_hash", sha256_hex(
            b"linear", str(self.height).encode(), self.prev_hash.encode(), self.miner.encode(),
            str(self.tick).encode(), *(c.to_bytes() for c in self.calls),
        ))

    @property
    def cumulative_weight(self) -> int:
        return self.height


GENESIS_BLOCK = LinearBlock(0, ZERO_HASH, (), "genesis", 0)


class ForkTree:
    """A node's set of known blocks; ``head`` is the heaviest tip (ties: lowest hash)."""

    def __init__(self, blocks=None):
        self.blocks: dict[str, LinearBlock] = {GENESIS_BLOCK.block_hash: GENESIS_BLOCK}
        for b in blocks or ():
            self.add(b)

    def add(self, block: LinearBlock) -> None:
        if block.block_hash in self.blocks:
            return
        parent = self.blocks.get(block.prev_hash)
        if parent is None or parent.height != block.height - 1:
            raise ValueError(f"block {block.block_hash[:12]} does not extend a known block")
        self.blocks[block.block_hash] = block

    def copy(self) -> "ForkTree":
        clone = ForkTree()
        clone.blocks = dict(self.blocks)
        return clone

    def absorb(self, other: "ForkTree") -> int:
        before = len(self.blocks)
        for b in sorted(other.blocks.values(), key=lambda b: b.height):
            self.add(b)
        return len(self.blocks) - before

    def tips(self) -> list[LinearBlock]:
        parents = {b.prev_hash for b in self.blocks.values() if b.height > 0}
        return [b for h, b in self.blocks.items() if h not in parents]

    def heads_by_weight(self) -> list[LinearBlock]:
        return sorted(self.tips(), key=lambda b: (-b.cumulative_weight, b.block_hash))

    @property
    def head(self) -> LinearBlock:
        return self.heads_by_weight()[0]

    def chain_to(self, block: LinearBlock) -> list[LinearBlock]:
        """Blocks from height 1 up to ``block``."""
        out = []
        cur = block
        while cur.height > 0:
            out.append(cur)
            cur = self.blocks[cur.prev_hash]
        return out[::-1]

    def canonical_chain(self) -> list[LinearBlock]:
        return self.chain_to(self.head)

    def dump(self) -> str:
        """Canonical chain in the committee chain-dump layout (``signers`` = miner, no delay)."""
        lines = []
        prev = ZERO_HASH
        for b in self.canonical_chain():
            lines.append(" ".join([
                "baseline", str(b.height), prev, b.block_hash, str(len(b.calls)), b.miner, str(b.tick), str(b.tick),
            ]))
            prev = b.block_hash
        return "".join(line + "\n" for line in lines)


def mine_block(tree: ForkTree, component, calls, now: int, miner: Optional[str] = None) -> Optional[LinearBlock]:
    """Extend the tree's current head with one block of ``calls``; no-op without calls."""
    if not component:
        raise ValueError("mining requires a non-empty component")
    calls = tuple(calls)
    if not calls:
        return None
    head = tree.head
    block = LinearBlock(head.height + 1, head.block_hash, calls, miner or min(str(n) for n in component), now)
    tree.add(block)
    return block


@dataclass
class DiscardedCall:
    block_hash: str
    height: int
    miner: str
    tick: int
    call: ContractCall

    @property
    def agent_id(self) -> str:
        return _call_agent(self.call)

    @property
    def vote_id(self) -> str:
        vote = _call_vote(self.call)
        return vote.vote_id if vote is not None else ""


def _call_vote(call: ContractCall) -> Optional[Vote]:
    if call.function in ("submitMap", "submitVote"):
        try:
            return Vote.from_bytes(call.payload)
        except ValueError:
            return None
    return None


def _call_agent(call: ContractCall) -> str:
    vote = _call_vote(call)
    if vote is not None:
        return vote.agent_id
    if call.function == "registerAgent":
        return call.payload.decode(errors="replace")
    return ""


@dataclass
class ReorgReport:
    canonical_head: str
    discarded: list[DiscardedCall]
    tie: bool = False
    warnings: list[str] = field(default_factory=list)

    def lost_agents(self) -> list[str]:
        return sorted({d.agent_id for d in self.discarded if d.agent_id})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["block_hash", "height", "miner", "tick", "contract", "function", "agent_id", "vote_id"])
        for d in self.discarded:
            writer.writerow([d.block_hash, d.height, d.miner, d.tick, d.call.contract, d.call.function,
                             d.agent_id, d.vote_id])
        return buf.getvalue()


def reorg_on_heal(trees) -> tuple[ForkTree, ReorgReport]:
    """Merge fork views; keep the heaviest chain and report calls found only on losing forks."""
    trees = list(trees)
    merged = trees[0].copy() if trees else ForkTree()
    for t in trees[1:]:
        merged.absorb(t)
    ranked = merged.heads_by_weight()
    head = ranked[0]
    report = ReorgReport(head.block_hash, [])
    if len(ranked) > 1 and ranked[1].cumulative_weight == head.cumulative_weight:
        report.tie = True
        msg = f"equal-weight forks at height {head.height}; kept lowest head hash {head.block_hash[:12]}"
        report.warnings.append(msg)
        log.warning(msg)
    canonical = merged.chain_to(head)
    canonical_hashes = {b.block_hash for b in canonical}
    kept_calls = {c.call_hash for b in canonical for c in b.calls}
    reported = set()
    for b in sorted(merged.blocks.values(), key=lambda b: (b.height, b.block_hash)):
        if b.block_hash in canonical_hashes or b.height == 0:
            continue
        for c in b.calls:
            if c.call_hash in kept_calls or c.call_hash in reported:
                continue
            reported.add(c.call_hash)
            report.discarded.append(DiscardedCall(b.block_hash, b.height, b.miner, b.tick, c))
    return merged, report


def replay_canonical(tree: ForkTree, genesis: ControllerSwarmState) -> ControllerSwarmState:
    """Contract state rebuilt from canonical-chain calls only."""
    state = genesis.copy()
    for b in tree.canonical_chain():
        for c in b.calls:
            execute(state, c)
    return state
