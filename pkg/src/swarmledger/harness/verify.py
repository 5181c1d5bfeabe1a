"""Offline checks over a run's output directory."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..committee_l2 import replay_blocks, load_chain
from ..grid_map import CellState, LocalMap
from ..ledger_l1 import check_dump, parse_dump
from ..mapping_contract import ControllerSwarmState, combine_maps
from .scenario import from_doc


@dataclass
class ChainCheck:
    chain_id: str
    blocks: int
    ok: bool
    divergent_height: Optional[int] = None
    message: str = ""


@dataclass
class VerifyReport:
    chains: list[ChainCheck] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems and all(c.ok for c in self.chains)

    def lines(self) -> list[str]:
        out = []
        for c in self.chains:
            if c.ok:
                out.append(f"chain {c.chain_id}: {c.blocks} blocks replayed OK")
            else:
                out.append(f"chain {c.chain_id}: FAILED at height {c.divergent_height}: {c.message}")
        out += [f"problem: {p}" for p in self.problems]
        out.append("verify: OK" if self.ok else "verify: FAILED")
        return out


def read_metrics(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return {k: v for k, v in rows[1:]}


def _malformed_heights(block_text: str, call_text: str) -> dict[int, str]:
    """Heights whose call lines cannot be parsed or whose count disagrees with the block line."""
    bad = {}
    counts: dict[int, int] = {}
    for line in call_text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        try:
            height = int(parts[0])
        except (ValueError, IndexError):
            bad.setdefault(-1, f"unparseable call line {line[:40]!r}")
            continue
        counts[height] = counts.get(height, 0) + 1
        if len(parts) != 5:
            bad.setdefault(height, "call line has the wrong number of fields")
            continue
        if parts[4] != "-":
            try:
                bytes.fromhex(parts[4])
            except ValueError:
                bad.setdefault(height, "call payload is not valid hex")
    for line in block_text.splitlines():
        if line.startswith("#") or not line.strip():
            continue
        fields = line.split()
        height, n_calls = int(fields[1]), int(fields[4])
        if counts.get(height, 0) != n_calls:
            bad.setdefault(height, f"block lists {n_calls} calls, call dump has {counts.get(height, 0)}")
    return bad


def verify_chain(chain_id: str, block_text: str, call_text: str):
    """Replay one chain dump; returns the check and the parsed ``(genesis, blocks)`` when readable."""
    bad = _malformed_heights(block_text, call_text)
    if bad:
        height = min(bad)
        return ChainCheck(chain_id, 0, False, height, bad[height]), None
    genesis, blocks = load_chain(block_text, call_text)
    result, _ = replay_blocks(genesis, blocks)
    check = ChainCheck(chain_id, len(blocks), result.ok, result.divergent_height, result.message)
    return check, (genesis, blocks)


def verify_output(out_dir) -> VerifyReport:
    out = Path(out_dir)
    report = VerifyReport()
    try:
        cfg = from_doc(json.loads((out / "scenario.json").read_text()))
    except (OSError, ValueError) as exc:
        report.problems.append(f"scenario.json: {exc}")
        return report
    metrics = read_metrics(out / "metrics.csv")
    end = int(metrics.get("mission_end_tick", "0"))

    controller_blocks = None
    for spec in sorted(cfg.committees, key=lambda c: c.chain_id):
        block_path = out / f"chain_{spec.chain_id}.txt"
        call_path = out / f"chain_{spec.chain_id}_calls.txt"
        if not block_path.exists() or not call_path.exists():
            report.problems.append(f"missing dump for chain {spec.chain_id}")
            continue
        check, loaded = verify_chain(spec.chain_id, block_path.read_text(), call_path.read_text())
        report.chains.append(check)
        if check.ok and spec.chain_id == cfg.controller.chain_id:
            controller_blocks = loaded

    ledger_text = (out / "ledger_l1.txt").read_text()
    report.problems += [f"ledger: {p}" for p in check_dump(ledger_text)]
    if not parse_dump(ledger_text):
        report.problems.append("ledger: empty dump")

    agent_ids = {a.id for a in cfg.agents}
    for key, value in metrics.items():
        if "coverage_pct" in key and value and not 0.0 <= float(value) <= 100.0:
            report.problems.append(f"metrics: {key}={value} outside [0, 100]")
    flagged = {a for a in metrics.get("flagged", "").split(";") if a}
    if not flagged <= agent_ids:
        report.problems.append(f"metrics: flagged {sorted(flagged - agent_ids)} are not agents")

    if controller_blocks is not None:
        genesis, blocks = controller_blocks
        _, state = replay_blocks(genesis, [b for b in blocks if b.confirm_tick <= end])
        _check_merge(report, state, out, flagged)
    return report


def _check_merge(report: VerifyReport, state: ControllerSwarmState, out: Path, flagged: set) -> None:
    merged = state.merge()
    if set(merged.byzantine) != flagged:
        report.problems.append(f"replayed flags {sorted(merged.byzantine)} differ from metrics {sorted(flagged)}")
    stored = LocalMap.from_pgm((out / "merged_twolayer.pgm").read_text())
    if stored != merged.global_map:
        report.problems.append("merged_twolayer.pgm differs from the replayed controller merge")
    honest = [r.vote.payload for r in state.submissions if r.vote.agent_id not in merged.byzantine]
    union = combine_maps(honest, state.world)
    extra = (merged.global_map.cells != CellState.UNKNOWN) & (union.cells == CellState.UNKNOWN)
    if np.any(extra):
        report.problems.append(f"merged map knows {int(extra.sum())} cells no accepted map covers")


def diff_outputs(a, b) -> list[tuple[str, str, str]]:
    """Metrics whose values differ between two output directories."""
    ma = read_metrics(Path(a) / "metrics.csv")
    mb = read_metrics(Path(b) / "metrics.csv")
    return [(k, ma.get(k, ""), mb.get(k, "")) for k in sorted(set(ma) | set(mb)) if ma.get(k) != mb.get(k)]
