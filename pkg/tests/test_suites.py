from __future__ import annotations

import json

import pytest

from g2flow.suites import SUITES, run_suite


@pytest.mark.parametrize("name,samples", [("fields", 2), ("spectrum", 2), ("symbols", 20), ("algebra", 20)])
def test_suites_pass(name, samples):
    rep = run_suite(name, samples=samples)
    assert rep.passed, rep.table()
    assert all(c.samples >= 1 for c in rep.checks)


def test_failed_check_names_its_seed():
    rep = run_suite("algebra", seed=40, samples=3, tol=1e-300)
    failed = [c for c in rep.checks if not c.passed]
    assert failed and all(c.seed in (40, 41, 42) for c in failed)
    assert "seed=" in rep.table()
    assert json.loads(rep.to_json())["passed"] is False


def test_unknown_suite():
    assert "algebra" in SUITES
    with pytest.raises(ValueError):
        run_suite("geometry")
