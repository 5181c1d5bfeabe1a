"""Layer-1 DAG ledger: content-addressed transactions that each approve two tips.

Every simulated node owns a ``TangleView``.  Nodes only see what they issued
or what reached them by gossip inside their partition component; views are
reconciled with :func:`sync_views` (set union) whenever nodes reconnect.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional, Union

from ._hashing import sha256_hex


class IntegrityError(Exception):
    """Two transactions share an id but differ in content."""


class AnchorError(ValueError):
    """A chain anchor would not advance the issuer's anchored height."""


@dataclass(frozen=True)
class Genesis:
    kind = "genesis"

    def digest(self) -> str:
        return sha256_hex(b"genesis")


@dataclass(frozen=True)
class DataDump:
    data: bytes
    kind = "data"

    def digest(self) -> str:
        return sha256_hex(b"data", self.data)


@dataclass(frozen=True)
class ChainAnchor:
    chain_id: str
    block_height: int
    state_hash: str
    kind = "anchor"

    def digest(self) -> str:
        return sha256_hex(b"anchor", self.chain_id.encode(), str(self.block_height).encode(), self.state_hash.encode())


Payload = Union[Genesis, DataDump, ChainAnchor]


@dataclass(frozen=True)
class Transaction:
    parent_a: str
    parent_b: str
    issuer: str
    timestamp: int
    payload: Payload
    tx_id: str = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tx_id", self.compute_id())

    @property
    def payload_kind(self) -> str:
        return self.payload.kind

    @property
    def payload_hash(self) -> str:
        return self.payload.digest()

    @property
    def parents(self) -> tuple[str, str]:
        return (self.parent_a, self.parent_b)

    @property
    def is_genesis(self) -> bool:
        return isinstance(self.payload, Genesis)

    def compute_id(self) -> str:
        return transaction_id(self.parent_a, self.parent_b, self.issuer, self.timestamp, self.payload_kind, self.payload_hash)

    def size(self) -> int:
        body = len(self.payload.data) if isinstance(self.payload, DataDump) else 64
        return 4 * 64 + body

    def dump_line(self) -> str:
        return " ".join([
            self.tx_id, self.parent_a or "-", self.parent_b or "-", self.issuer,
            str(self.timestamp), self.payload_kind, self.payload_hash,
        ])


def transaction_id(parent_a: str, parent_b: str, issuer: str, timestamp: int, kind: str, payload_hash: str) -> str:
    return sha256_hex(
        parent_a.encode(), parent_b.encode(), issuer.encode(), str(timestamp).encode(), kind.encode(), payload_hash.encode()
    )


GENESIS = Transaction("", "", "genesis", 0, Genesis())


class TangleView:
    """One node's local picture of the DAG."""

    def __init__(self, transactions=None):
        self.transactions: dict[str, Transaction] = {}
        self.tips: set[str] = set()
        self._children: dict[str, int] = {}
        self._anchors: dict[tuple[str, str], int] = {}
        self._insert(GENESIS)
        for tx in transactions or ():
            self._insert(tx)

    def __len__(self):
        return len(self.transactions)

    def __contains__(self, tx_id):
        return tx_id in self.transactions

    def __eq__(self, other):
        return isinstance(other, TangleView) and self.transactions == other.transactions

    def get(self, tx_id: str) -> Transaction:
        return self.transactions[tx_id]

    def _insert(self, tx: Transaction) -> bool:
        existing = self.transactions.get(tx.tx_id)
        if existing is not None:
            if existing != tx:
                raise IntegrityError(f"transaction {tx.tx_id[:12]} has conflicting contents")
            return False
        if not tx.is_genesis:
            for p in set(tx.parents):
                if p not in self.transactions:
                    raise IntegrityError(f"transaction {tx.tx_id[:12]} references unknown parent {p[:12]}")
        self.transactions[tx.tx_id] = tx
        self._children.setdefault(tx.tx_id, 0)
        if not tx.is_genesis:
            for p in set(tx.parents):
                self._children[p] += 1
                self.tips.discard(p)
        if self._children[tx.tx_id] == 0:
            self.tips.add(tx.tx_id)
        if isinstance(tx.payload, ChainAnchor):
            key = (tx.issuer, tx.payload.chain_id)
            self._anchors[key] = max(self._anchors.get(key, 0), tx.payload.block_height)
        return True

    def last_anchor_height(self, issuer: str, chain_id: str) -> int:
        return self._anchors.get((issuer, chain_id), 0)

    def copy(self) -> "TangleView":
        clone = TangleView.__new__(TangleView)
        clone.transactions = dict(self.transactions)
        clone.tips = set(self.tips)
        clone._children = dict(self._children)
        clone._anchors = dict(self._anchors)
        return clone

    def same_as(self, other: "TangleView") -> bool:
        # views are parent-closed, so the tip set determines the whole view
        return self.tips == other.tips

    def absorb(self, other: "TangleView") -> list[Transaction]:
        """Add every transaction of ``other`` missing here (parents first); returns the new ones."""
        missing = {}
        for tid, tx in other.transactions.items():
            mine = self.transactions.get(tid)
            if mine is None:
                missing[tid] = tx
            elif mine is not tx and mine != tx:
                raise IntegrityError(f"transaction {tid[:12]} has conflicting contents")
        waiting = {}
        children: dict[str, list[str]] = {}
        for tid, tx in missing.items():
            deps = {p for p in tx.parents if p in missing} if not tx.is_genesis else set()
            waiting[tid] = len(deps)
            for p in deps:
                children.setdefault(p, []).append(tid)
        heap = [(tx.timestamp, tid) for tid, tx in missing.items() if waiting[tid] == 0]
        heapq.heapify(heap)
        added = []
        while heap:
            _, tid = heapq.heappop(heap)
            tx = missing[tid]
            self._insert(tx)
            added.append(tx)
            for child in children.get(tid, ()):
                waiting[child] -= 1
                if waiting[child] == 0:
                    heapq.heappush(heap, (missing[child].timestamp, child))
        if len(added) != len(missing):
            raise IntegrityError("view contains a cycle among new transactions")
        return added

    # -- operations

    def issue(self, issuer: str, payload: Payload, now: int, rng: random.Random) -> Transaction:
        """Approve two tips drawn uniformly from this view (one tip is used twice)."""
        tips = sorted(self.tips)
        if len(tips) == 1:
            a = b = tips[0]
        else:
            a, b = rng.sample(tips, 2)
        tx = Transaction(a, b, issuer, now, payload)
        self._insert(tx)
        return tx

    def anchor_chain_state(self, issuer: str, chain_id: str, height: int, state_hash: str, now: int,
                           rng: random.Random) -> Transaction:
        last = self.last_anchor_height(issuer, chain_id)
        if height <= last:
            raise AnchorError(f"anchor height {height} for {chain_id} does not exceed {issuer}'s last anchor {last}")
        return self.issue(issuer, ChainAnchor(chain_id, height, state_hash), now, rng)

    def dump_data(self, issuer: str, data: bytes, now: int, rng: random.Random) -> Transaction:
        return self.issue(issuer, DataDump(bytes(data)), now, rng)

    # -- inspection

    def anchors(self, chain_id: Optional[str] = None) -> list[Transaction]:
        return [
            tx for tx in self.transactions.values()
            if isinstance(tx.payload, ChainAnchor) and (chain_id is None or tx.payload.chain_id == chain_id)
        ]

    def ancestors(self, tx_id: str) -> set[str]:
        seen = set()
        stack = [tx_id]
        while stack:
            cur = stack.pop()
            tx = self.transactions[cur]
            if tx.is_genesis:
                continue
            for p in tx.parents:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def dump(self) -> str:
        return "".join(tx.dump_line() + "\n" for tx in topological_order(self))

    def to_dot(self) -> str:
        lines = ["digraph tangle {", "  rankdir=RL;"]
        for tx in topological_order(self):
            label = f"{tx.payload_kind}\\n{tx.issuer}@{tx.timestamp}"
            if isinstance(tx.payload, ChainAnchor):
                label += f"\\n{tx.payload.chain_id}#{tx.payload.block_height}"
            lines.append(f'  "{tx.tx_id[:12]}" [label="{label}"];')
            if not tx.is_genesis:
                for p in sorted(set(tx.parents)):
                    lines.append(f'  "{tx.tx_id[:12]}" -> "{p[:12]}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def topological_order(view: TangleView) -> list[Transaction]:
    """Parents before children; ties broken by (timestamp, tx_id) for a stable order."""
    txs = view.transactions
    pending = {tid: len(set(tx.parents)) if not tx.is_genesis else 0 for tid, tx in txs.items()}
    children: dict[str, list[str]] = {}
    for tid, tx in txs.items():
        if not tx.is_genesis:
            for p in set(tx.parents):
                children.setdefault(p, []).append(tid)
    heap = [(txs[t].timestamp, t) for t, n in pending.items() if n == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, tid = heapq.heappop(heap)
        order.append(txs[tid])
        for child in children.get(tid, ()):
            pending[child] -= 1
            if pending[child] == 0:
                heapq.heappush(heap, (txs[child].timestamp, child))
    if len(order) != len(txs):
        raise IntegrityError("transaction graph contains a cycle")
    return order


def sync_views(a: TangleView, b: TangleView) -> TangleView:
    """Union of two views sharing genesis; a fresh view, inputs untouched."""
    merged = a.copy()
    merged.absorb(b)
    return merged


def is_acyclic(view: TangleView) -> bool:
    """Iterative three-colour DFS over parent edges."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(view.transactions, WHITE)
    for root in view.transactions:
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(_parents(view, root)))]
        colour[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
            elif nxt not in colour:
                return False
            elif colour[nxt] == GREY:
                return False
            elif colour[nxt] == WHITE:
                colour[nxt] = GREY
                stack.append((nxt, iter(_parents(view, nxt))))
    return True


def _parents(view: TangleView, tx_id: str):
    tx = view.transactions[tx_id]
    return () if tx.is_genesis else tuple(sorted(set(tx.parents)))


def genesis_reachable(view: TangleView) -> bool:
    """Every transaction reaches genesis through parent links."""
    reaches = {GENESIS.tx_id}
    for tx in topological_order(view):
        if tx.is_genesis:
            continue
        if all(p in reaches for p in tx.parents):
            reaches.add(tx.tx_id)
    return len(reaches) == len(view.transactions)


def parse_dump(text: str) -> list[dict]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        tx_id, pa, pb, issuer, ts, kind, phash = line.split()
        rows.append({
            "tx_id": tx_id,
            "parent_a": "" if pa == "-" else pa,
            "parent_b": "" if pb == "-" else pb,
            "issuer": issuer,
            "timestamp": int(ts),
            "payload_kind": kind,
            "payload_hash": phash,
        })
    return rows


def check_dump(text: str) -> list[str]:
    """Problems found in a ledger dump: bad ids, dangling parents, parents listed after children."""
    problems = []
    seen = set()
    for row in parse_dump(text):
        expect = transaction_id(row["parent_a"], row["parent_b"], row["issuer"], row["timestamp"],
                                row["payload_kind"], row["payload_hash"])
        if expect != row["tx_id"]:
            problems.append(f"tx {row['tx_id'][:12]}: id does not match contents")
        if row["payload_kind"] != "genesis":
            for p in (row["parent_a"], row["parent_b"]):
                if p not in seen:
                    problems.append(f"tx {row['tx_id'][:12]}: parent {p[:12]} missing or listed later")
        seen.add(row["tx_id"])
    return problems
