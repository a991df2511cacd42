"""Acceptance gate: one test per pinned criterion.

Each check is a fixed, seeded experiment defined in
``scma_uplink.acceptance``; the slow sweeps are cached inside that
module, so related criteria share one computation per process.  Checks
with an explicit runtime budget are timed here as well.
"""

import time

import pytest

from scma_uplink.acceptance import CHECKS

# wall-clock budgets in seconds; criteria without one are unconstrained
BUDGETS = {
    "noiseless-recovery": 30.0,
    "solver-fixed-point": 10.0,
    "lasso-vs-least-squares": 600.0,
    "detector-oracle-agreement": 120.0,
    "sync-ber-floor": 300.0,
    "concentration-bounds": 300.0,
}


@pytest.mark.parametrize("name", list(CHECKS))
def test_criterion(name):
    start = time.perf_counter()
    passed, detail = CHECKS[name]()
    elapsed = time.perf_counter() - start
    assert passed, f"{name}: {detail}"
    budget = BUDGETS.get(name)
    if budget is not None:
        assert elapsed < budget, f"{name} took {elapsed:.1f}s (budget {budget:.0f}s)"
