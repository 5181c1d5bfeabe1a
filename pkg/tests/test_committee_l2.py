import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmledger.committee_l2 import (
    ACK,
    CallStatus,
    ChainRuntime,
    Committee,
    LatencyConfig,
    chain_state_hash,
    dispatch_async_calls,
    dump_chain,
    load_chain,
    replay_blocks,
    replay_verify,
    try_commit_block,
)
from swarmledger.grid_map import CellState, LocalMap, World
from swarmledger.ledger_l1 import TangleView
from swarmledger.mapping_contract import (
    AgentSwarmState,
    ControllerSwarmState,
    Vote,
    register_call,
    submit_vote_call,
    transfer_call,
)

WORLD = World(8, 8)
FAST = LatencyConfig(confirmation_delay=0)


def comps(*groups):
    return tuple(frozenset(g) for g in groups)


def agent_rt(members=("a", "b", "c", "d"), f=1, latency=FAST, withholding=()):
    return ChainRuntime(Committee("agents", members, f, frozenset(withholding)), AgentSwarmState("ctrl"), latency)


def ctrl_rt(members=("s",), f=0, latency=FAST):
    return ChainRuntime(Committee("ctrl", members, f), ControllerSwarmState(WORLD), latency)


def vote(agent="a", value=CellState.FREE):
    return Vote(agent, None, LocalMap((0, 0), np.full((4, 4), value, dtype=np.uint8)))


def test_committee_sizing():
    with pytest.raises(ValueError):
        Committee("x", ("a", "b", "c"), 1)
    c = Committee("x", ("d", "c", "b", "a"), 1)
    assert c.quorum == 3 and c.members == ("a", "b", "c", "d")
    assert Committee("x", tuple("abcdefg"), 2).quorum == 5


def test_commit_needs_quorum_component():
    rt = agent_rt()
    call = submit_vote_call(vote())
    assert try_commit_block(rt, [call], comps("abcd"), 0)
    assert not try_commit_block(rt, [call], comps("ab", "cd"), 1)
    assert rt.height == 1
    # 3/1 split: the three-member side signs, the lone member is not a signer
    assert try_commit_block(rt, [submit_vote_call(vote("b"))], comps("d", "abc"), 2)
    assert rt.blocks[-1].signers == ("a", "b", "c")
    assert rt.committee.quorum_component(comps("d", "abc")) == 1


def test_failed_commit_changes_nothing():
    rt = agent_rt()
    before = rt.contract_state.digest()
    assert not try_commit_block(rt, [submit_vote_call(vote())], comps("ab", "cd"), 0)
    assert rt.blocks == [] and rt.contract_state.digest() == before


def test_withholding_members_do_not_sign():
    rt = agent_rt(withholding=("a",))
    assert not try_commit_block(rt, [submit_vote_call(vote())], comps("abd", "c"), 0)
    assert try_commit_block(rt, [submit_vote_call(vote())], comps("bcd", "a"), 0)
    assert rt.blocks[0].signers == ("b", "c", "d") and rt.blocks[0].leader == "b"


def test_block_fields_and_hash_chain():
    rt = agent_rt(latency=LatencyConfig(confirmation_delay=10))
    for t, agent in enumerate("abc"):
        try_commit_block(rt, [submit_vote_call(vote(agent))], comps("abcd"), t)
    prev = "0" * 64
    for h, b in enumerate(rt.blocks, start=1):
        assert b.height == h and b.prev_state_hash == prev
        assert b.new_state_hash == chain_state_hash(prev, b.calls)
        assert b.confirm_tick == b.commit_tick + 10
        assert len(b.signers) >= rt.committee.quorum and set(b.signers) <= set(rt.committee.members)
        prev = b.new_state_hash


def test_results_hidden_until_confirmed():
    rt = agent_rt(latency=LatencyConfig(confirmation_delay=10))
    try_commit_block(rt, [submit_vote_call(vote())], comps("abcd"), 5)
    assert rt.confirmed_state(14).pending_votes == []
    assert len(rt.confirmed_state(15).pending_votes) == 1


def test_anchor_issued_by_leader():
    views = {m: TangleView() for m in "abcd"}
    rng = random.Random(0)

    def anchor(leader, chain_id, height, state_hash, now):
        views[leader].anchor_chain_state(leader, chain_id, height, state_hash, now, rng)

    rt = agent_rt()
    try_commit_block(rt, [submit_vote_call(vote())], comps("bcd", "a"), 0, anchor=anchor)
    assert len(views["b"].anchors("agents")) == 1 and not views["a"].anchors()
    anchor_tx = views["b"].anchors("agents")[0]
    assert anchor_tx.payload.state_hash == rt.head_hash


def _transfer_setup(latency=FAST):
    agents, ctrl = agent_rt(latency=latency), ctrl_rt(latency=latency)
    ctrl_state = ctrl.contract_state
    for a in "abcd":
        ctrl_state.register_agent(a)
    ctrl.genesis_state = ctrl_state.copy()
    return {"agents": agents, "ctrl": ctrl}


def test_transfer_delivered_same_tick_then_executed_and_acked():
    rts = _transfer_setup()
    everyone = comps("abcds")
    v = vote()
    try_commit_block(rts["agents"], [submit_vote_call(v), transfer_call()], everyone, 0)
    events = dispatch_async_calls(rts, everyone, 0)
    assert [e.function for e in events] == ["submitVotes"]
    assert rts["ctrl"].contract_state.vote_ids() == []
    assert try_commit_block(rts["ctrl"], [], everyone, 1)
    assert rts["ctrl"].contract_state.vote_ids() == [v.vote_id]
    events = dispatch_async_calls(rts, everyone, 1)
    assert [e.function for e in events] == [ACK]
    try_commit_block(rts["agents"], [], everyone, 2)
    assert rts["agents"].contract_state.transferred == {v.vote_id}
    assert all(c.status is CallStatus.ACKED for c in rts["agents"].sent.values())


def test_isolated_chain_keeps_call_pending_until_heal():
    rts = _transfer_setup()
    split = comps("abcd", "s")
    try_commit_block(rts["agents"], [submit_vote_call(vote()), transfer_call()], split, 0)
    for t in range(1, 500):
        assert dispatch_async_calls(rts, split, t) == []
    [pending] = rts["agents"].outbox
    assert pending.status is CallStatus.PENDING
    events = dispatch_async_calls(rts, comps("abcds"), 500)
    assert len(events) == 1 and events[0].tick == 500
    try_commit_block(rts["ctrl"], [], comps("abcds"), 500)
    assert rts["ctrl"].contract_state.vote_ids() == [vote().vote_id]


def test_delivery_needs_both_quorums_in_one_component():
    rts = _transfer_setup()
    try_commit_block(rts["agents"], [submit_vote_call(vote()), transfer_call()], comps("abcds"), 0)
    # agent quorum {a,b,c} and the controller are in different components
    assert dispatch_async_calls(rts, comps("abc", "ds"), 1) == []
    assert len(dispatch_async_calls(rts, comps("abcs", "d"), 2)) == 1


def test_duplicate_delivery_executes_once():
    rts = _transfer_setup()
    everyone = comps("abcds")
    v = vote()
    try_commit_block(rts["agents"], [submit_vote_call(v), transfer_call()], everyone, 0)
    [call] = rts["agents"].outbox
    dispatch_async_calls(rts, everyone, 0)
    # the network redelivers the same call
    rts["agents"].outbox.append(call)
    events = dispatch_async_calls(rts, everyone, 0)
    assert events[0].duplicate
    try_commit_block(rts["ctrl"], [], everyone, 1)
    assert rts["ctrl"].contract_state.vote_ids() == [v.vote_id]
    assert len(rts["ctrl"].blocks[-1].calls) == 1


def test_malformed_payload_consumed_with_error_ack():
    rts = _transfer_setup()
    everyone = comps("abcds")
    rts["agents"]._emit("ctrl", "submitVotes", b"\x00\x00\x00\x09broken", 0)
    dispatch_async_calls(rts, everyone, 0)
    try_commit_block(rts["ctrl"], [], everyone, 1)
    height, call, receipt = rts["ctrl"].receipts[-1]
    assert not receipt.ok
    [ack] = rts["ctrl"].outbox
    assert json.loads(ack.payload)["status"].startswith("error")
    dispatch_async_calls(rts, everyone, 1)
    assert rts["ctrl"].outbox == []


def test_replay_verify_examples():
    assert replay_verify(agent_rt())
    rt = agent_rt()
    for t, a in enumerate("abc"):
        try_commit_block(rt, [submit_vote_call(vote(a))], comps("abcd"), t)
    assert replay_verify(rt)
    blocks, calls = dump_chain(rt)
    genesis, loaded = load_chain(blocks, calls)
    assert loaded == rt.blocks
    tampered = calls.splitlines()
    parts = tampered[1].split()
    payload = bytearray.fromhex(parts[4])
    payload[-1] ^= 1
    parts[4] = payload.hex()
    tampered[1] = " ".join(parts)
    genesis, bad_blocks = load_chain(blocks, "\n".join(tampered))
    result, _ = replay_blocks(genesis, bad_blocks)
    assert not result and result.divergent_height == 2


def test_controller_dump_round_trip():
    rt = ctrl_rt()
    try_commit_block(rt, [register_call("a")], comps("s"), 0)
    genesis, blocks = load_chain(*dump_chain(rt))
    result, state = replay_blocks(genesis, blocks)
    assert result and state.digest() == rt.contract_state.digest()


@st.composite
def committee_and_partitions(draw):
    f = draw(st.sampled_from([1, 2]))
    n = 3 * f + 1
    members = [f"m{i}" for i in range(n)]
    extra = [f"x{i}" for i in range(draw(st.integers(0, 3)))]
    nodes = members + extra
    ticks = []
    for _ in range(draw(st.integers(1, 25))):
        labels = draw(st.lists(st.integers(0, 3), min_size=len(nodes), max_size=len(nodes)))
        groups = {}
        for node, label in zip(nodes, labels):
            groups.setdefault(label, set()).add(node)
        ticks.append(tuple(frozenset(g) for g in groups.values()))
    return f, members, ticks


@settings(max_examples=150, deadline=None)
@given(committee_and_partitions())
def test_commit_iff_quorum_colocated(case):
    f, members, ticks = case
    rt = ChainRuntime(Committee("c", tuple(members), f), ControllerSwarmState(WORLD), FAST)
    for t, components in enumerate(ticks):
        best = max(len(set(members) & c) for c in components)
        committed = try_commit_block(rt, [register_call(f"agent{t}")], components, t)
        assert committed == (best >= len(members) - f)
    heights = [b.height for b in rt.blocks]
    assert heights == list(range(1, len(heights) + 1))
    assert replay_verify(rt)
