import numpy as np
import pytest

from survforest.dataset import CONTINUOUS, UNORDERED, Frame, VariableSpec, load_pbc, split_trial
from survforest.forest import GrowConfig, grow

ACCEPTANCE = {}
PBC_SEEDS = (1, 2, 3, 4, 5)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def pbc():
    return load_pbc()


@pytest.fixture(scope="session")
def trial_test(pbc):
    return split_trial(pbc)


@pytest.fixture(scope="session")
def trial(trial_test):
    return trial_test[0]


@pytest.fixture(scope="session")
def small_forest(trial):
    return grow(trial, GrowConfig(ntree=60, seed=11))


@pytest.fixture(scope="session")
def pbc_forests(trial):
    """Full-size default forests, one per acceptance seed, with grow wall times."""
    import time
    grow(trial, GrowConfig(ntree=2, seed=0))  # compile kernels outside the timed region
    out = {}
    for seed in PBC_SEEDS:
        t0 = time.perf_counter()
        out[seed] = (grow(trial, GrowConfig(seed=seed)), time.perf_counter() - t0)
    return out


def make_frame(x, time, status, names=None, kinds=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j}" for j in range(x.shape[1])]
    specs = []
    for j, nm in enumerate(names):
        kind = (kinds or {}).get(nm, CONTINUOUS)
        levels = () if kind == CONTINUOUS else tuple(
            str(i) for i in range(int(np.nanmax(x[:, j])) + 1))
        specs.append(VariableSpec(nm, kind, levels))
    return Frame(tuple(specs), x, np.asarray(time, float), np.asarray(status, bool))


@pytest.fixture
def toy():
    rng = np.random.default_rng(5)
    n = 30
    x = np.column_stack([rng.normal(size=n), rng.integers(0, 3, n), rng.uniform(size=n)])
    time = np.round(np.exp(1 - x[:, 0] + rng.normal(scale=0.3, size=n)), 3)
    status = rng.uniform(size=n) < 0.75
    return make_frame(x, time, status, ["a", "b", "c"], {"b": UNORDERED})
