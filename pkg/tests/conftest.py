import os
from pathlib import Path

import pytest

from twbh.engine import EnsemblePlan, run_ensemble

# Long ensembles are checkpointed here and reused by later sessions.
CACHE = Path(os.environ.get("TWBH_CACHE", Path(__file__).resolve().parents[1] / ".cache" / "ensembles"))


def cached_ensemble(cfg, n_trajectories, seed=20240501, n_batches=100):
    plan = EnsemblePlan(n_trajectories, seed, n_batches)
    CACHE.mkdir(parents=True, exist_ok=True)
    path = CACHE / f"{cfg.digest()}-s{seed}-n{n_trajectories}-b{n_batches}.npz"
    return run_ensemble(cfg, plan, checkpoint=path)


@pytest.fixture(scope="session")
def ensemble_cache():
    return cached_ensemble


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
