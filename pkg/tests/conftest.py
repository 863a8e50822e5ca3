import numpy as np
import pytest

from weakarma.dist import QuantileTable, load_table, tabulate_table

FULL_TABLE_K = range(1, 13)
FULL_TABLE_R = 100_000
FULL_TABLE_STEPS = 2000
FULL_TABLE_SEED = 20_240_101


@pytest.fixture(scope="session")
def full_table(request) -> QuantileTable:
    """U_K table for K = 1..12 at default resolution, cached between runs."""
    cache_dir = request.config.cache.makedir("weakarma_tables")
    path = cache_dir / f"uk_{FULL_TABLE_R}_{FULL_TABLE_STEPS}_{FULL_TABLE_SEED}.bin"
    if path.exists():
        return load_table(path)
    table = tabulate_table(FULL_TABLE_K, R=FULL_TABLE_R, n_steps=FULL_TABLE_STEPS, seed=FULL_TABLE_SEED)
    table.save(path)
    return table


@pytest.fixture(scope="session")
def small_table() -> QuantileTable:
    return tabulate_table(range(1, 13), R=2000, n_steps=200, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
