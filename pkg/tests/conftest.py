import numpy as np
import pytest
from hypothesis import settings

from pvnet.config import Config
from pvnet.synthdata import generate_dataset

# (criterion number, line) pairs filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


settings.register_profile("pvnet", max_examples=30, deadline=None)
settings.load_profile("pvnet")

TINY_STACK = (3, 3, "pool", 4, 4, "pool", 5, 5, "pool")


def tiny_config(**changes):
    """8x8 grid, 20 days, a three-stage conv stack and 4 LSTM units."""
    base = dict(days=20, n_rows=8, n_cols=8, n_plants=200, conv_stack=TINY_STACK, fc_dim=6,
                lstm_units=4, epochs=3, batch_size=8, batch_run_length=8)
    base.update(changes)
    return Config(**base)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_data(tiny_cfg):
    return generate_dataset(tiny_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
