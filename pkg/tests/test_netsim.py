import itertools

import pytest
from hypothesis import given, settings, strategies as st

from swarmledger.netsim import ConfigError, DeliveryLog, NodeId, PartitionSchedule


def test_single_partition_everyone_together():
    s = PartitionSchedule.connected_all(["a", "b", "c"])
    for t in (0, 10, 10_000):
        assert s.components(t) == (frozenset("abc"),)


def test_changes_take_effect_at_their_tick():
    s = PartitionSchedule([(0, [["a", "b"]]), (100, [["a"], ["b"]]), (500, [["a", "b"]])])
    assert s.connected("a", "b", 99)
    assert not s.connected("a", "b", 100)
    assert s.connected("a", "b", 500)
    assert s.next_change_after(99) == 100 and s.next_change_after(500) is None


def test_three_way_split_matches_config():
    groups = [["a", "b"], ["c"], ["d", "e", "f"]]
    s = PartitionSchedule([(0, groups)])
    label = {n: i for i, g in enumerate(groups) for n in g}
    for x, y in itertools.product(label, repeat=2):
        assert s.connected(x, y, 0) == (label[x] == label[y])
        assert s.component_of(x, 0)[1] == frozenset(groups[label[x]])


@pytest.mark.parametrize("entries", [
    [],
    [(1, [["a"]])],
    [(0, [["a"]]), (0, [["a"]])],
    [(0, [["a", "b"], ["b"]])],
    [(0, [["a", "b"]]), (5, [["a"]])],
    [(0, [[]])],
])
def test_malformed_schedules_rejected(entries):
    with pytest.raises(ConfigError):
        PartitionSchedule(entries)


def test_unknown_node_and_negative_tick():
    s = PartitionSchedule.connected_all(["a"])
    with pytest.raises(ConfigError):
        s.component_of("zz", 0)
    with pytest.raises(ConfigError):
        s.components(-1)


def test_node_id_and_log():
    assert str(NodeId("s0", "station")) == "s0"
    with pytest.raises(ValueError):
        NodeId("x", "robot")
    log = DeliveryLog()
    log.record(3, "a", "b", "gossip", 10)
    assert log.to_csv() == "tick,src,dst,kind,bytes\n3,a,b,gossip,10\n"


@st.composite
def schedules(draw):
    nodes = [f"n{i}" for i in range(draw(st.integers(1, 8)))]
    entries = []
    tick = 0
    for _ in range(draw(st.integers(1, 6))):
        labels = draw(st.lists(st.integers(0, 3), min_size=len(nodes), max_size=len(nodes)))
        groups = {}
        for n, lab in zip(nodes, labels):
            groups.setdefault(lab, []).append(n)
        entries.append((tick, list(groups.values())))
        tick += draw(st.integers(1, 50))
    return PartitionSchedule(entries), nodes, tick


@settings(max_examples=100, deadline=None)
@given(schedules(), st.integers(0, 400))
def test_connectivity_is_an_equivalence(case, t):
    s, nodes, _ = case
    for a in nodes:
        assert s.connected(a, a, t)
        for b in nodes:
            assert s.connected(a, b, t) == s.connected(b, a, t)
            for c in nodes:
                if s.connected(a, b, t) and s.connected(b, c, t):
                    assert s.connected(a, c, t)


@settings(max_examples=50, deadline=None)
@given(schedules())
def test_schedule_doc_round_trip(case):
    s, _, _ = case
    assert PartitionSchedule([(e["from_tick"], e["partition"]) for e in s.to_doc()]) == s
