import json

import pytest

from src.cli import main
from src.verify import COLLAPSE_IDENTITIES, run_gradcheck, run_invariants


def _failed(result):
    return [check for check in result.checks if not check["passed"]]


def test_gradcheck_suite_passes_on_fresh_networks():
    result = run_gradcheck(seed=0)
    assert result.passed, _failed(result)
    names = {check["name"] for check in result.checks}
    assert {"generator_forward", "discriminator_forward", "leaky_relu", "instance_norm2d"} <= names


def test_verify_gradcheck_exits_zero(capsys):
    assert main(["verify", "--suite", "gradcheck"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["suite"] == "gradcheck" and summary["passed"] is True


def test_invariants_pass_with_short_collapse_runs():
    result = run_invariants(seed=0, collapse_steps=3)
    assert result.passed, _failed(result)
    names = {check["name"] for check in result.checks}
    assert {label for label, _, _ in COLLAPSE_IDENTITIES} <= names
    assert "gewegimgan_eta0_equals_gimgan" in names and "gewegimgan_rho1_equals_gewegan" in names


@pytest.mark.slow
def test_verify_invariants_exits_zero(capsys):
    assert main(["verify", "--suite", "invariants"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
