import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from swarmledger.harness.canonical import maze_analog
from swarmledger.harness.runner import run_scenario
from swarmledger.ledger_l1 import (
    GENESIS,
    AnchorError,
    ChainAnchor,
    DataDump,
    IntegrityError,
    TangleView,
    Transaction,
    check_dump,
    genesis_reachable,
    is_acyclic,
    parse_dump,
    sync_views,
    topological_order,
)
from strategies import random_views


def rng():
    return random.Random(0)


def test_first_issue_references_genesis_twice():
    v = TangleView()
    tx = v.dump_data("a", b"x", 1, rng())
    assert tx.parents == (GENESIS.tx_id, GENESIS.tx_id)
    assert v.tips == {tx.tx_id}


def test_two_tips_are_both_approved():
    a, b = TangleView(), TangleView()
    t1 = a.dump_data("a", b"1", 1, rng())
    t2 = b.dump_data("b", b"2", 1, rng())
    merged = sync_views(a, b)
    assert merged.tips == {t1.tx_id, t2.tx_id}
    t3 = merged.dump_data("a", b"3", 2, rng())
    assert set(t3.parents) == {t1.tx_id, t2.tx_id}
    assert merged.tips == {t3.tx_id}


def test_sequential_issues_form_single_tip_chain():
    v = TangleView()
    r = rng()
    for t in range(100):
        v.dump_data("a", str(t).encode(), t, r)
    assert len(v.tips) == 1 and len(v) == 101
    assert is_acyclic(v) and genesis_reachable(v)
    tip = next(iter(v.tips))
    assert v.ancestors(tip) | {tip} == set(v.transactions)


def test_partitioned_sides_merge_with_both_tips():
    a, b = TangleView(), TangleView()
    ra, rb = random.Random(1), random.Random(2)
    for t in range(5):
        a.dump_data("a", bytes([t]), t, ra)
        b.dump_data("b", bytes([t]), t, rb)
    merged = sync_views(a, b)
    assert len(merged) == 11
    assert merged.tips == a.tips | b.tips and len(merged.tips) == 2
    assert genesis_reachable(merged)


def test_anchor_heights_must_increase():
    v = TangleView()
    r = rng()
    v.anchor_chain_state("lead", "C", 1, "h1", 1, r)
    v.anchor_chain_state("lead", "C", 3, "h3", 2, r)
    with pytest.raises(AnchorError):
        v.anchor_chain_state("lead", "C", 2, "h2", 3, r)
    with pytest.raises(AnchorError):
        v.anchor_chain_state("lead", "C", 3, "h3", 3, r)
    # a different chain keeps its own counter
    v.anchor_chain_state("lead", "D", 1, "d1", 3, r)


def test_anchor_history_traversal_in_causal_order():
    v = TangleView()
    r = rng()
    for h in range(1, 6):
        v.anchor_chain_state("lead", "C", h, f"s{h}", h, r)
        v.dump_data("other", bytes([h]), h, r)
    tip = max(v.anchors("C"), key=lambda tx: tx.payload.block_height)
    found = [v.get(t) for t in v.ancestors(tip.tx_id) | {tip.tx_id}]
    anchors = [tx for tx in topological_order(v) if tx in found and isinstance(tx.payload, ChainAnchor)]
    assert [tx.payload.block_height for tx in anchors] == [1, 2, 3, 4, 5]


def test_dump_payload_retrievable_and_empty_payload_valid():
    v = TangleView()
    data = bytes(range(256)) * 6
    tx = v.dump_data("a", data, 1, rng())
    assert v.get(tx.tx_id).payload.data == data and len(data) == 1536
    empty = v.dump_data("a", b"", 2, rng())
    assert empty.tx_id in v and genesis_reachable(v)


def test_thousand_dumps_at_data_rate_have_monotone_timestamps():
    v = TangleView()
    r = rng()
    issued = []
    tick = 0
    while len(issued) < 1000:
        n = int(5.5 * (tick + 1)) - int(5.5 * tick)
        for _ in range(n):
            if len(issued) < 1000:
                issued.append(v.dump_data("a", b"x" * 1536, tick, r))
        tick += 1
    assert len(v) == 1001
    stamps = [tx.timestamp for tx in issued]
    assert stamps == sorted(stamps)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["parent_a", "parent_b", "issuer", "timestamp", "payload"]))
def test_mutating_any_field_changes_id(seed, name):
    v = TangleView()
    r = random.Random(seed)
    tx = v.dump_data("a", r.randbytes(8), r.randrange(1000), r)
    replacement = {
        "parent_a": "f" * 64, "parent_b": "e" * 64, "issuer": "b",
        "timestamp": tx.timestamp + 1, "payload": DataDump(tx.payload.data + b"!"),
    }[name]
    assert dataclasses.replace(tx, **{name: replacement}).tx_id != tx.tx_id


def test_conflicting_contents_raise_integrity_error():
    v = TangleView()
    tx = v.dump_data("a", b"x", 1, rng())
    forged = Transaction(tx.parent_a, tx.parent_b, "mallory", 1, DataDump(b"y"))
    object.__setattr__(forged, "tx_id", tx.tx_id)
    other = TangleView()
    other.transactions[forged.tx_id] = forged
    with pytest.raises(IntegrityError):
        v.absorb(other)


def test_unknown_parent_rejected():
    with pytest.raises(IntegrityError):
        TangleView([Transaction("a" * 64, "b" * 64, "x", 1, DataDump(b""))])


def test_cycle_detection():
    v = TangleView()
    r = rng()
    t1 = v.dump_data("a", b"1", 1, r)
    t2 = v.dump_data("a", b"2", 2, r)
    bad = dataclasses.replace(t1, parent_a=t2.tx_id)
    object.__setattr__(bad, "tx_id", t1.tx_id)
    v.transactions[t1.tx_id] = bad
    assert not is_acyclic(v)


def test_dump_check_and_tamper_detection():
    v = TangleView()
    r = rng()
    for t in range(5):
        v.dump_data("a", bytes([t]), t, r)
    text = v.dump()
    assert check_dump(text) == [] and len(parse_dump(text)) == 6
    lines = text.splitlines()
    fields = lines[3].split()
    fields[4] = str(int(fields[4]) + 1)
    lines[3] = " ".join(fields)
    assert check_dump("\n".join(lines)) != []
    assert 'digraph tangle' in v.to_dot()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sync_is_a_semilattice(seed):
    a, b, c = random_views(seed)
    assert sync_views(a, a) == a
    assert sync_views(a, b) == sync_views(b, a)
    assert sync_views(sync_views(a, b), c) == sync_views(a, sync_views(b, c))
    ab = sync_views(a, b)
    assert ab.tips == {t for t in ab.transactions if not any(t in x.parents for x in ab.transactions.values()
                                                             if not x.is_genesis)}


def test_partition_closure_against_schedule():
    """No view holds a transaction whose issuer could not have reached that node in time."""
    cfg = maze_analog()
    agents = tuple(dataclasses.replace(a, dump_rate_hz=0.5) for a in cfg.agents)
    result = run_scenario(dataclasses.replace(cfg, agents=agents))
    schedule = cfg.schedule.entries
    end = result.mission_end
    for node, view in result.views.items():
        for tx in view.transactions.values():
            if tx.is_genesis:
                continue
            reached = {tx.issuer}
            for t in range(tx.timestamp, end + 1):
                for comp in schedule.components(t):
                    if reached & comp:
                        reached |= comp
            assert node in reached, (node, tx.issuer, tx.timestamp)
    # gossip records in the delivery log never cross component boundaries
    for d in result.delivery_log.records:
        if d.kind == "gossip":
            assert schedule.connected(d.src, d.dst, d.tick)
    assert is_acyclic(result.ledger) and genesis_reachable(result.ledger)
