"""End-to-end scenario execution for the two-layer system and the longest-chain baseline."""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..baseline_chain import ForkTree, ReorgReport, mine_block, reorg_on_heal, replay_canonical
from ..committee_l2 import ChainRuntime, dispatch_async_calls, dump_chain, try_commit_block
from ..grid_map import CellState, LocalMap, World, map_coverage
from ..ledger_l1 import TangleView
from ..mapping_contract import (
    AgentSwarmState,
    ContractError,
    ControllerSwarmState,
    MergeResult,
    Vote,
    allocate_call,
    combine_maps,
    decode_votes,
    register_call,
    submit_map_call,
    submit_vote_call,
    transfer_call,
)
from ..netsim import ConfigError, DeliveryLog
from .scenario import ScenarioConfig
from .sensing import anomaly_cells, derive_seed, sense_region
from .worlds import make_world


@dataclass
class VoteRecord:
    vote: Vote
    submit_tick: int
    byzantine: bool
    anomaly: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class TimelineEntry:
    tick: int
    height: int
    submissions: int
    coverage_pct: float
    flagged: tuple[str, ...]
    merged: LocalMap = field(repr=False)


@dataclass
class RunMetrics:
    agent_coverage: dict[str, float]
    union_coverage: float
    twolayer_coverage: float
    baseline_coverage: Optional[float]
    flagged: tuple[str, ...]
    twolayer_accuracy: float
    baseline_accuracy: Optional[float]
    lost_calls: int
    lost_agents: tuple[str, ...]
    latencies: list[int]
    seconds_per_tick: float = 1.0
    mission_end: int = 0

    def rows(self) -> list[tuple[str, str]]:
        def pct(v):
            return "" if v is None else f"{v:.4f}"

        out = [(f"coverage_pct.{a}", pct(v)) for a, v in sorted(self.agent_coverage.items())]
        lat = self.latencies
        out += [
            ("union_coverage_pct", pct(self.union_coverage)),
            ("twolayer_coverage_pct", pct(self.twolayer_coverage)),
            ("baseline_coverage_pct", pct(self.baseline_coverage)),
            ("flagged", ";".join(self.flagged)),
            ("twolayer_accuracy", pct(self.twolayer_accuracy)),
            ("baseline_accuracy", pct(self.baseline_accuracy)),
            ("baseline_lost_calls", str(self.lost_calls)),
            ("baseline_lost_agents", ";".join(self.lost_agents)),
            ("confirmed_votes", str(len(lat))),
            ("latency_ticks_mean", f"{sum(lat) / len(lat):.4f}" if lat else ""),
            ("latency_ticks_max", str(max(lat)) if lat else ""),
            ("latency_seconds_mean", f"{sum(lat) / len(lat) * self.seconds_per_tick:.4f}" if lat else ""),
            ("mission_end_tick", str(self.mission_end)),
        ]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerows(self.rows())
        return buf.getvalue()


def report_merge_progress(snapshots, world: World, every: Optional[int] = None) -> list[TimelineEntry]:
    """Coverage and flag timeline over controller snapshots ``(height, confirm_tick, state)``.

    By default one entry per confirmed block; with ``every`` one entry per
    ``every`` ticks, each showing the latest state confirmed by then.
    """
    snapshots = sorted(snapshots, key=lambda s: (s[1], s[0]))
    if every is not None and snapshots:
        sampled = []
        last = snapshots[-1][1]
        idx = -1
        for tick in range(0, last + every, every):
            while idx + 1 < len(snapshots) and snapshots[idx + 1][1] <= tick:
                idx += 1
            if idx >= 0:
                height, _, state = snapshots[idx]
                sampled.append((height, tick, state))
        snapshots = sampled
    entries = []
    for height, tick, state in snapshots:
        merged = state.merge()
        entries.append(TimelineEntry(
            tick=tick,
            height=height,
            submissions=len(state.submissions),
            coverage_pct=100.0 * map_coverage(merged.global_map, world),
            flagged=tuple(sorted(merged.byzantine)),
            merged=merged.global_map,
        ))
    return entries


def timeline_csv(entries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tick", "height", "submissions", "coverage_pct", "flagged"])
    for e in entries:
        writer.writerow([e.tick, e.height, e.submissions, f"{e.coverage_pct:.4f}", ";".join(e.flagged)])
    return buf.getvalue()


def accuracy(merged: LocalMap, truth: np.ndarray) -> float:
    known = merged.cells != CellState.UNKNOWN
    if not known.any():
        return 1.0
    return float(np.count_nonzero(merged.cells[known] == truth[known]) / np.count_nonzero(known))


@dataclass
class RunResult:
    cfg: ScenarioConfig
    truth: np.ndarray
    metrics: RunMetrics
    runtimes: dict
    views: dict
    ledger: TangleView
    delivery_log: DeliveryLog
    votes: list[VoteRecord]
    twolayer: MergeResult
    controller_state: ControllerSwarmState
    mission_end: int
    baseline_tree: Optional[ForkTree] = None
    baseline_report: Optional[ReorgReport] = None
    baseline_state: Optional[ControllerSwarmState] = None
    baseline: Optional[MergeResult] = None

    @property
    def controller(self) -> ChainRuntime:
        return self.runtimes[self.cfg.controller.chain_id]

    def timeline(self, every: Optional[int] = None) -> list[TimelineEntry]:
        snaps = [s for s in self.controller.snapshots if s[1] <= self.mission_end]
        return report_merge_progress(snaps, self.cfg.world.world, every)

    def agent_chain_votes(self) -> dict[str, list[str]]:
        return {
            cid: [v.vote_id for v in rt.contract_state.pending_votes]
            for cid, rt in self.runtimes.items() if isinstance(rt.contract_state, AgentSwarmState)
        }


class Simulation:
    """Single-threaded tick loop that drives all nodes and chains plus the baseline."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.world = cfg.world.world
        try:
            self.truth = make_world(cfg.world.generator, cfg.world.rows, cfg.world.cols, cfg.world.seed, cfg.world.path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"world: {exc}") from None
        self.schedule = cfg.schedule.entries
        self.nodes = sorted(self.schedule.nodes)
        self.log = DeliveryLog()
        self.spt = cfg.latency.seconds_per_tick

        self.views = {n: TangleView() for n in self.nodes}
        self.tip_rng = {n: random.Random(derive_seed(cfg.seed, "tips", n)) for n in self.nodes}
        self.data_rng = {n: random.Random(derive_seed(cfg.seed, "data", n)) for n in self.nodes}

        self.controller_id = cfg.controller.chain_id
        self.controller_genesis = ControllerSwarmState(self.world, cfg.compare)
        self.runtimes: dict[str, ChainRuntime] = {}
        for spec in cfg.committees:
            genesis = self.controller_genesis if spec.chain_id == self.controller_id else AgentSwarmState(self.controller_id)
            self.runtimes[spec.chain_id] = ChainRuntime(spec.committee(), genesis, cfg.latency)
        self.chain_specs = {c.chain_id: c for c in cfg.committees}
        self.agent_chain = {a.id: cfg.agent_chain(a).chain_id for a in cfg.agents}
        self.mempool = {cid: [] for cid in self.runtimes}
        self.requests = {n: [] for n in self.nodes}
        self.allocator = self.runtimes[self.controller_id].committee.members[0]

        self.baseline_on = cfg.baseline.enabled
        self.trees = {n: ForkTree() for n in self.nodes}
        self.baseline_queue = {n: [] for n in self.nodes}

        self.regions = {a.id: (None if a.auto else list(a.regions)) for a in cfg.agents}
        self.submitted: set[str] = set()
        self.votes: list[VoteRecord] = []
        self.allocation_requested = False
        self.baseline_allocation_requested = False
        self._payload_ids: dict[str, frozenset] = {}

        self.mission_end = max([self.schedule.last_tick] + [a.submit_tick for a in cfg.agents]) + cfg.schedule.drain_ticks
        self._preflight()

    # -- setup

    def _preflight(self) -> None:
        cfg = self.cfg
        if not cfg.uses_allocation:
            return
        scratch = ControllerSwarmState(self.world, cfg.compare)
        for a in cfg.agents:
            scratch.register_agent(a.id)
        try:
            scratch.allocate_roles(cfg.world.regions(), cfg.allocation)
        except ContractError as exc:
            raise ConfigError(f"allocation infeasible: {exc}") from None
        if cfg.byzantine_model.require_detectable:
            byz = {a.id for a in cfg.agents if a.byzantine}
            for region, agents in scratch.assignment.items():
                bad = sorted(byz & set(agents))
                if len(bad) > cfg.allocation.f:
                    raise ConfigError(
                        f"region {region.as_list()} is assigned {len(bad)} byzantine agents {bad}, "
                        f"more than f={cfg.allocation.f}; detection is not guaranteed"
                    )
        self.expected_assignment = scratch.assignment

    # -- main loop

    def run(self) -> RunResult:
        t = 0
        while t <= self.mission_end:
            changed = self.step(t)
            t = t + 1 if changed else self._next_event(t)
        return self._finish()

    def step(self, t: int) -> bool:
        comps = self.schedule.components(t)
        changed = False
        changed |= self._agent_actions(t, comps)
        changed |= self._ingress(t, comps)
        changed |= self._request_transfers(t)
        changed |= self._commit(t, comps)
        events = dispatch_async_calls(self.runtimes, comps, t)
        for ev in events:
            kind = "ack" if ev.function == "__ack__" else "async"
            self.log.record(t, ev.source_chain, ev.target_chain, kind, ev.nbytes)
        changed |= bool(events)
        if self.baseline_on:
            changed |= self._baseline(t, comps)
        changed |= self._gossip(t, comps)
        return changed

    def _agent_actions(self, t, comps) -> bool:
        cfg = self.cfg
        changed = False
        controller = self.runtimes[self.controller_id]
        if t == 0:
            for a in cfg.agents:
                self.requests[a.id].append((self.controller_id, register_call(a.id)))
                self.baseline_queue[a.id].append(register_call(a.id))
            changed = True
        everyone = {a.id for a in cfg.agents}
        if cfg.uses_allocation and not self.allocation_requested:
            if everyone <= controller.confirmed_state(t).registered_agents:
                call = allocate_call(cfg.world.regions(), cfg.allocation)
                self.requests[self.allocator].append((self.controller_id, call))
                self.allocation_requested = changed = True
        if self.baseline_on and cfg.uses_allocation and not self.baseline_allocation_requested:
            state = replay_canonical(self.trees[self.allocator], self.controller_genesis)
            if everyone <= state.registered_agents:
                self.baseline_queue[self.allocator].append(allocate_call(cfg.world.regions(), cfg.allocation))
                self.baseline_allocation_requested = changed = True
        q = controller.committee.quorum_component(comps)
        for a in cfg.agents:
            if self.regions[a.id] is None and q is not None and a.id in comps[q]:
                assignment = controller.confirmed_state(t).assignment
                if assignment:
                    self.regions[a.id] = [r for r, agents in assignment.items() if a.id in agents]
                    changed = True
            if a.id not in self.submitted and t >= a.submit_tick and self.regions[a.id] is not None:
                self._submit(a, t)
                changed = True
            if a.dump_rate_hz > 0:
                n = math.floor(a.dump_rate_hz * (t + 1) * self.spt) - math.floor(a.dump_rate_hz * t * self.spt)
                for _ in range(n):
                    data = self.data_rng[a.id].randbytes(a.dump_bytes)
                    self.views[a.id].dump_data(a.id, data, t, self.tip_rng[a.id])
                changed |= n > 0
        return changed

    def _submit(self, agent, t) -> None:
        bm = self.cfg.byzantine_model
        for region in self.regions[agent.id]:
            seed = derive_seed(bm.seed, agent.id, region.as_list())
            honest = sense_region(self.truth, region)
            local = sense_region(self.truth, region, bm, seed) if agent.byzantine else honest
            vote = Vote(agent.id, region, local)
            self.votes.append(VoteRecord(vote, t, agent.byzantine, anomaly_cells(honest, local)))
            self.requests[agent.id].append((self.agent_chain[agent.id], submit_vote_call(vote)))
            self.baseline_queue[agent.id].append(submit_map_call(vote))
        self.submitted.add(agent.id)

    def _ingress(self, t, comps) -> bool:
        moved = False
        quorum = {cid: rt.committee.quorum_component(comps) for cid, rt in self.runtimes.items()}
        for node in self.nodes:
            keep = []
            for cid, call in self.requests[node]:
                q = quorum[cid]
                if q is not None and node in comps[q]:
                    self.mempool[cid].append(call)
                    self.log.record(t, node, cid, "request", len(call.payload))
                    moved = True
                else:
                    keep.append((cid, call))
            self.requests[node] = keep
        return moved

    def _covered(self, rt: ChainRuntime) -> set:
        covered = set()
        for call in rt.unacked():
            ids = self._payload_ids.get(call.call_id)
            if ids is None:
                try:
                    ids = frozenset(v.vote_id for v in decode_votes(call.payload))
                except ValueError:
                    ids = frozenset()
                self._payload_ids[call.call_id] = ids
            covered |= ids
        return covered

    def _uncovered_votes(self, cid) -> bool:
        rt = self.runtimes[cid]
        if any(ac.is_ack for ac in rt.inbox):
            # acknowledgments still to execute; they may settle these votes
            return False
        pending = {v.vote_id for v in rt.contract_state.untransferred()}
        return bool(pending - self._covered(rt))

    def _request_transfers(self, t) -> bool:
        queued = False
        for cid in sorted(self.runtimes):
            rt = self.runtimes[cid]
            if not isinstance(rt.contract_state, AgentSwarmState):
                continue
            if t % self.chain_specs[cid].transfer_interval:
                continue
            if any(c.function == "transferVotes" for c in self.mempool[cid]):
                continue
            incoming = any(c.function == "submitVote" for c in self.mempool[cid])
            if incoming or self._uncovered_votes(cid):
                self.mempool[cid].append(transfer_call())
                queued = True
        return queued

    def _anchor(self, leader, chain_id, height, state_hash, now) -> None:
        self.views[leader].anchor_chain_state(leader, chain_id, height, state_hash, now, self.tip_rng[leader])

    def _commit(self, t, comps) -> bool:
        committed = False
        for cid in sorted(self.runtimes):
            if try_commit_block(self.runtimes[cid], self.mempool[cid], comps, t, anchor=self._anchor):
                self.mempool[cid] = []
                committed = True
        return committed

    def _baseline(self, t, comps) -> bool:
        changed = False
        interval_ok = t % self.cfg.baseline.block_interval == 0
        for comp in comps:
            members = sorted(comp)
            trees = [self.trees[m] for m in members]
            calls = [c for m in members for c in self.baseline_queue[m]] if interval_ok else []
            if all(tr is trees[0] for tr in trees) and not calls:
                continue
            merged = trees[0].copy()
            for tr in trees[1:]:
                if tr is not trees[0]:
                    merged.absorb(tr)
            if calls:
                mine_block(merged, comp, calls, t, miner=members[0])
                for m in members:
                    self.baseline_queue[m] = []
                changed = True
            for m in members:
                if len(self.trees[m].blocks) != len(merged.blocks):
                    changed = True
                self.trees[m] = merged
        return changed

    def _gossip(self, t, comps) -> bool:
        changed = False
        for comp in comps:
            members = sorted(comp)
            if len(members) < 2:
                continue
            first = self.views[members[0]]
            if all(self.views[m].same_as(first) for m in members[1:]):
                continue
            merged = first.copy()
            for m in members[1:]:
                merged.absorb(self.views[m])
            for m in members:
                new = merged.transactions.keys() - self.views[m].transactions.keys()
                if new:
                    src = members[1] if m == members[0] else members[0]
                    nbytes = sum(merged.transactions[tid].size() for tid in new)
                    self.log.record(t, src, m, "gossip", nbytes)
                    self.views[m] = merged.copy()
                    changed = True
        return changed

    def _next_event(self, t: int) -> int:
        """Earliest tick after ``t`` at which anything can change, given a quiet tick at ``t``."""
        cand = [self.mission_end + 1]
        nxt = self.schedule.next_change_after(t)
        if nxt is not None:
            cand.append(nxt)
        for a in self.cfg.agents:
            if a.id not in self.submitted and a.submit_tick > t:
                cand.append(a.submit_tick)
            if a.dump_rate_hz > 0:
                cand.append(t + 1)
        for cid, rt in self.runtimes.items():
            for ac in rt.outbox:
                if ac.eligible_tick > t:
                    cand.append(ac.eligible_tick)
            for b in reversed(rt.blocks):
                if b.confirm_tick <= t:
                    break
                cand.append(b.confirm_tick)
            if isinstance(rt.contract_state, AgentSwarmState):
                interval = self.chain_specs[cid].transfer_interval
                if interval > 1 and self._uncovered_votes(cid):
                    cand.append((t // interval + 1) * interval)
        if self.baseline_on and self.cfg.baseline.block_interval > 1 and any(self.baseline_queue.values()):
            bi = self.cfg.baseline.block_interval
            cand.append((t // bi + 1) * bi)
        return max(t + 1, min(cand))

    # -- results

    def _finish(self) -> RunResult:
        cfg = self.cfg
        world = self.world
        end = self.mission_end
        ledger = TangleView()
        for n in self.nodes:
            ledger.absorb(self.views[n])

        controller = self.runtimes[self.controller_id]
        final_state = controller.confirmed_state(end)
        twolayer = final_state.merge()

        agent_cov = {}
        for a in cfg.agents:
            maps = [r.vote.payload for r in self.votes if r.vote.agent_id == a.id]
            agent_cov[a.id] = 100.0 * map_coverage(combine_maps(maps, world), world)
        union = combine_maps([r.vote.payload for r in self.votes], world)

        latencies = []
        seen: set[str] = set()
        submit_tick = {r.vote.vote_id: r.submit_tick for r in self.votes}
        for _, confirm_tick, snap in controller.snapshots:
            if confirm_tick > end:
                break
            for vid in snap.vote_ids():
                if vid not in seen:
                    seen.add(vid)
                    latencies.append(confirm_tick - submit_tick.get(vid, confirm_tick))

        result = RunResult(
            cfg=cfg, truth=self.truth, metrics=None, runtimes=self.runtimes, views=self.views, ledger=ledger,
            delivery_log=self.log, votes=self.votes, twolayer=twolayer, controller_state=final_state,
            mission_end=end,
        )
        base_cov = base_acc = None
        lost_calls, lost_agents = 0, ()
        if self.baseline_on:
            tree, report = reorg_on_heal(self.trees[n] for n in self.nodes)
            state = replay_canonical(tree, self.controller_genesis)
            result.baseline_tree, result.baseline_report, result.baseline_state = tree, report, state
            result.baseline = state.merge()
            base_cov = 100.0 * map_coverage(result.baseline.global_map, world)
            base_acc = accuracy(result.baseline.global_map, self.truth)
            lost_calls = len(report.discarded)
            lost_agents = tuple(report.lost_agents())
        result.metrics = RunMetrics(
            agent_coverage=agent_cov,
            union_coverage=100.0 * map_coverage(union, world),
            twolayer_coverage=100.0 * map_coverage(twolayer.global_map, world),
            baseline_coverage=base_cov,
            flagged=tuple(sorted(twolayer.byzantine)),
            twolayer_accuracy=accuracy(twolayer.global_map, self.truth),
            baseline_accuracy=base_acc,
            lost_calls=lost_calls,
            lost_agents=lost_agents,
            latencies=latencies,
            seconds_per_tick=self.spt,
            mission_end=end,
        )
        return result


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    return Simulation(cfg).run()


def merge_report_csv(state: ControllerSwarmState) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["agent_id", "maps", "complied", "contracted", "flagged", "coverage_pct"])
    for row in state.merge_report():
        writer.writerow([row["agent_id"], row["maps"], row["complied"], row["contracted"],
                         int(row["flagged"]), f"{row['coverage_pct']:.4f}"])
    return buf.getvalue()


def write_outputs(result: RunResult, out_dir, snapshot_every: Optional[int] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = result.cfg.world.world
    (out / "scenario.json").write_text(result.cfg.to_json())
    result.twolayer.global_map.write_pgm(out / "merged_twolayer.pgm")
    if result.baseline is not None:
        result.baseline.global_map.write_pgm(out / "merged_baseline.pgm")
        (out / "discarded_calls.csv").write_text(result.baseline_report.to_csv())
        (out / "chain_baseline.txt").write_text(result.baseline_tree.dump())
    for a in result.cfg.agents:
        maps = [r.vote.payload for r in result.votes if r.vote.agent_id == a.id]
        combine_maps(maps, world).write_pgm(out / f"agent_{a.id}.pgm")
    (out / "metrics.csv").write_text(result.metrics.to_csv())
    (out / "merge_timeline.csv").write_text(timeline_csv(result.timeline(snapshot_every)))
    (out / "merge_report.csv").write_text(merge_report_csv(result.controller_state))
    (out / "ledger_l1.txt").write_text(result.ledger.dump())
    (out / "tangle.dot").write_text(result.ledger.to_dot())
    (out / "delivery_log.csv").write_text(result.delivery_log.to_csv())
    for cid, rt in sorted(result.runtimes.items()):
        blocks, calls = dump_chain(rt)
        (out / f"chain_{cid}.txt").write_text(blocks)
        (out / f"chain_{cid}_calls.txt").write_text(calls)
    return out


@dataclass
class LoadResult:
    transactions: int
    dumps: int
    timestamps_monotone: bool
    simulated_seconds: int
    view: TangleView = field(repr=False)


def dump_load(rate_hz: float = 5.5, seconds: int = 600, payload_bytes: int = 1536, seed: int = 0,
              issuer: str = "a0") -> LoadResult:
    """Stream raw dumps from one node into its ledger view at ``rate_hz`` for ``seconds``."""
    view = TangleView()
    tips = random.Random(derive_seed(seed, "tips", issuer))
    data = random.Random(derive_seed(seed, "data", issuer))
    issued = []
    for t in range(seconds):
        n = math.floor(rate_hz * (t + 1)) - math.floor(rate_hz * t)
        for _ in range(n):
            issued.append(view.dump_data(issuer, data.randbytes(payload_bytes), t, tips))
    stamps = [tx.timestamp for tx in issued]
    return LoadResult(
        transactions=len(view) - 1,
        dumps=len(issued),
        timestamps_monotone=all(a <= b for a, b in zip(stamps, stamps[1:])),
        simulated_seconds=seconds,
        view=view,
    )
