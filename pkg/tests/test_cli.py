import shutil

import pytest

from swarmledger.harness.cli import main


@pytest.fixture(scope="module")
def maze_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("maze")
    assert main(["run", "maze_analog", "--out", str(out)]) == 0
    return out


def test_run_writes_expected_files(maze_out):
    for name in ("merged_twolayer.pgm", "merged_baseline.pgm", "agent_a0.pgm", "metrics.csv",
                 "merge_timeline.csv", "ledger_l1.txt", "chain_main.txt", "discarded_calls.csv", "tangle.dot"):
        assert (maze_out / name).exists(), name


def test_verify_passes_on_fresh_output(maze_out, capsys):
    assert main(["verify", str(maze_out)]) == 0
    assert "verify: OK" in capsys.readouterr().out


def test_verify_pinpoints_tampered_block(maze_out, tmp_path, capsys):
    copy = tmp_path / "copy"
    shutil.copytree(maze_out, copy)
    path = copy / "chain_controller_calls.txt"
    lines = path.read_text().splitlines()
    idx = next(i for i, line in enumerate(lines) if line.split()[4] != "-")
    height = int(lines[idx].split()[0])
    parts = lines[idx].split()
    payload = bytearray.fromhex(parts[4])
    payload[0] ^= 0xFF
    parts[4] = payload.hex()
    lines[idx] = " ".join(parts)
    path.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(copy)]) == 1
    assert f"chain controller: FAILED at height {height}" in capsys.readouterr().out


def test_verify_detects_ledger_and_map_tampering(maze_out, tmp_path, capsys):
    copy = tmp_path / "copy"
    shutil.copytree(maze_out, copy)
    pgm = copy / "merged_twolayer.pgm"
    head, _, pixels = pgm.read_text().rpartition("\n255\n")
    pgm.write_text(head + "\n255\n" + pixels.replace("255", "0", 1))
    ledger = copy / "ledger_l1.txt"
    ledger.write_text(ledger.read_text().replace(" a0 ", " a9 ", 1))
    assert main(["verify", str(copy)]) == 1
    out = capsys.readouterr().out
    assert "merged_twolayer.pgm differs" in out and "ledger:" in out


def test_diff_and_seed_and_no_baseline(maze_out, tmp_path, capsys):
    other = tmp_path / "other"
    assert main(["run", "maze_analog", "--out", str(other), "--seed", "9", "--no-baseline",
                 "--snapshot-every", "20"]) == 0
    assert not (other / "merged_baseline.pgm").exists()
    capsys.readouterr()
    assert main(["diff", str(maze_out), str(maze_out)]) == 0
    assert main(["diff", str(maze_out), str(other)]) == 1
    assert "baseline_coverage_pct" in capsys.readouterr().out


def test_bad_scenario_reports_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"world": {"rows": 4}, "bogus": 1}')
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "unknown keys" in capsys.readouterr().err
