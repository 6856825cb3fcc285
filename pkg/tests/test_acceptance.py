"""The fourteen acceptance criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line plus its metric lines.
"""

import pytest

from tdmcfan.harness.acceptance import criteria, run_criterion

CRITERIA = criteria(out="acceptance-out")


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number:02d}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    metrics, ok = run_criterion(criterion, jobs=1, write=False)
    with capsys.disabled():
        print(f"\ncriterion {criterion.number:2d}: {'PASS' if ok else 'FAIL'} {criterion.title}")
        for m in metrics:
            print(f"    {m.line()}")
    assert ok, "\n".join(m.line() for m in metrics if not m.passed)
