"""Discrete-time partition model and message-delivery log."""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Invalid scenario or schedule configuration."""


@dataclass(frozen=True, order=True)
class NodeId:
    name: str
    role: str = "agent"

    def __post_init__(self):
        if self.role not in ("agent", "station"):
            raise ConfigError(f"unknown node role {self.role!r}")

    def __str__(self):
        return self.name


class PartitionSchedule:
    """Ordered ``(from_tick, partition)`` entries; each partition is a list of disjoint node sets.

    A change takes effect at its ``from_tick``.  Read-only after construction.
    """

    def __init__(self, entries):
        self.entries = tuple(
            (int(tick), tuple(frozenset(str(n) for n in group) for group in partition))
            for tick, partition in entries
        )
        self._validate()
        self._ticks = [t for t, _ in self.entries]
        self._lookup = [
            {node: idx for idx, group in enumerate(partition) for node in group}
            for _, partition in self.entries
        ]

    def __eq__(self, other):
        return isinstance(other, PartitionSchedule) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"PartitionSchedule({self.to_doc()!r})"

    @classmethod
    def connected_all(cls, nodes) -> "PartitionSchedule":
        return cls([(0, [list(nodes)])])

    def _validate(self) -> None:
        if not self.entries:
            raise ConfigError("schedule needs at least one entry")
        if self.entries[0][0] != 0:
            raise ConfigError("first schedule entry must start at tick 0")
        nodes = None
        prev = -1
        for tick, partition in self.entries:
            if tick <= prev:
                raise ConfigError(f"schedule ticks must be strictly increasing (got {tick} after {prev})")
            prev = tick
            seen: set[str] = set()
            for group in partition:
                if not group:
                    raise ConfigError(f"empty component at tick {tick}")
                if seen & group:
                    raise ConfigError(f"components overlap at tick {tick}: {sorted(seen & group)}")
                seen |= group
            if nodes is None:
                nodes = seen
            elif seen != nodes:
                raise ConfigError(f"partition at tick {tick} does not cover the same node set")

    @property
    def nodes(self) -> frozenset:
        return frozenset().union(*self.entries[0][1])

    @property
    def change_ticks(self) -> list[int]:
        return list(self._ticks)

    @property
    def last_tick(self) -> int:
        return self._ticks[-1]

    def _entry(self, tick: int) -> int:
        if tick < 0:
            raise ConfigError(f"tick must be non-negative, got {tick}")
        return bisect.bisect_right(self._ticks, tick) - 1

    def components(self, tick: int) -> tuple:
        return self.entries[self._entry(tick)][1]

    def component_of(self, node, tick: int) -> tuple[int, frozenset]:
        idx = self._entry(tick)
        try:
            comp = self._lookup[idx][str(node)]
        except KeyError:
            raise ConfigError(f"node {node!s} is not in the schedule") from None
        return comp, self.entries[idx][1][comp]

    def connected(self, a, b, tick: int) -> bool:
        return self.component_of(a, tick)[0] == self.component_of(b, tick)[0]

    def next_change_after(self, tick: int):
        i = bisect.bisect_right(self._ticks, tick)
        return self._ticks[i] if i < len(self._ticks) else None

    def to_doc(self) -> list:
        return [{"from_tick": t, "partition": [sorted(g) for g in p]} for t, p in self.entries]


@dataclass(frozen=True)
class Delivery:
    tick: int
    src: str
    dst: str
    kind: str
    bytes: int


@dataclass
class DeliveryLog:
    records: list[Delivery] = field(default_factory=list)

    def record(self, tick: int, src: str, dst: str, kind: str, nbytes: int) -> None:
        self.records.append(Delivery(tick, str(src), str(dst), kind, int(nbytes)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tick", "src", "dst", "kind", "bytes"])
        for r in self.records:
            writer.writerow([r.tick, r.src, r.dst, r.kind, r.bytes])
        return buf.getvalue()
