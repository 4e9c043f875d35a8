import json
import subprocess
import sys

import numpy as np
import pytest

from nonlocal_gate import cli
from nonlocal_gate.config import (
    CorrectorKind,
    RunConfig,
    batch_draws,
    draws_per_trial,
    trial_draws,
)


def run(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "nonlocal_gate", *args], capture_output=True, timeout=120
    )
    return proc.returncode, proc.stdout, proc.stderr.decode()


# --- config and seeding -------------------------------------------------------


def test_defaults():
    config = cli.parse_config([])
    assert config == RunConfig()
    assert config.control == pytest.approx((0.7071067811865476,) * 2)
    assert (config.corrector, config.trials, config.seed, config.max_attempts) == (
        CorrectorKind.CUO, 1, 0, 64
    )


def test_purify_flags():
    config = cli.parse_config(["--alpha", "0.8", "--mode", "purify", "--trials", "100000", "--seed", "7"])
    assert (config.mode, config.trials, config.seed, config.alpha) == ("purify", 100000, 7, 0.8)


def test_validator_flags():
    config = cli.parse_config(["--corrector", "povm", "--mode", "validate", "--alpha", "0.8"])
    assert config.corrector is CorrectorKind.POVM_LITERAL and config.mode == "validate"


@pytest.mark.parametrize("args,flag", [
    (["--alpha", "0.3"], "--alpha"),
    (["--control", "1"], "--control"),
    (["--trials", "0"], "--trials"),
    (["--corrector", "magic"], "--corrector"),
    (["--seed", str(2**64)], "--seed"),
])
def test_usage_errors(args, flag, capsys):
    with pytest.raises(SystemExit) as info:
        cli.parse_config(args)
    assert info.value.code == 2
    assert flag in capsys.readouterr().err


def test_config_renormalizes_and_validates():
    assert RunConfig(control=(3, 4)).control == pytest.approx((0.6, 0.8))
    with pytest.raises(ValueError):
        RunConfig(alpha=0.5)
    with pytest.raises(ValueError):
        RunConfig(mode="interactive")


def test_trial_slices_are_replayable():
    width = draws_per_trial(5)
    assert width % 4 == 0 and width >= 15
    table = batch_draws(9, 10, 6, 5)
    for k in range(6):
        assert np.array_equal(table[k], trial_draws(9, 10 + k, 5))


# --- reports ------------------------------------------------------------------


def test_plain_rounds_to_15_digits():
    assert cli.plain(0.1 + 0.2) == 0.3
    assert cli.plain({"z": 1 + 2j, "n": None}) == {"z": [1.0, 2.0], "n": None}


def test_single_perfect_channel_ledger():
    code, out, _ = run("--alpha", "0.7071067811865476", "--control", "0.6,0.8")
    assert code == 0
    report = json.loads(out)
    assert {k: report["ledger"][k] for k in ("ebits", "bits_a_to_b", "bits_b_to_a")} == {
        "ebits": 1, "bits_a_to_b": 1, "bits_b_to_a": 1
    }
    assert report["config"]["control"] == [0.6, 0.8]


def test_purify_report_has_expected_rate():
    code, out, _ = run("--alpha", "0.8", "--mode", "purify", "--trials", "200")
    assert code == 0
    report = json.loads(out)
    assert report["expected_rate"] == 0.72
    assert report["config"]["max_attempts"] == 1


def test_validate_report():
    code, out, _ = run("--mode", "validate", "--alpha", "0.8")
    report = json.loads(out)
    assert code == 0 and report["is_physical"] is False
    assert report["max_eigen_success"] == 1.5625


def test_exhausted_single_run_exits_3():
    code, out, err = run("--max-attempts", "1", "--seed", "1")
    assert code == 3 and "attempts failed" in err
    assert json.loads(out)["succeeded"] is False


def test_csv_rows(tmp_path):
    trace = tmp_path / "t.jsonl"
    code, out, _ = run("--mode", "montecarlo", "--trials", "7", "--format", "csv", "--trace", str(trace))
    lines = out.decode().splitlines()
    assert code == 0
    assert lines[0] == "trial,attempts,succeeded,m_bits,fidelity"
    assert len(lines) == 8
    first = json.loads(trace.read_text().splitlines()[0])
    assert list(first) == ["trial", "attempt", "seq", "kind", "step", "payload"]


@pytest.mark.parametrize("mode", ["single", "montecarlo", "purify", "validate", "exact"])
def test_reports_are_byte_identical(mode):
    args = ("--mode", mode, "--trials", "300", "--seed", "42", "--max-attempts", "5")
    assert run(*args)[1] == run(*args)[1]
