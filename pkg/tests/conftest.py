import pytest

from brokersim.harness import ExperimentConfig, run_c_sweep, run_grid


@pytest.fixture(scope="session")
def desk_config() -> ExperimentConfig:
    # Library defaults: 12 spreads x 50 loads x 5 strategies x 5 carriers.
    return ExperimentConfig(workers=4)


@pytest.fixture(scope="session")
def desk_grid(desk_config):
    return run_grid(desk_config)


@pytest.fixture(scope="session")
def c_sweep(desk_config):
    return run_c_sweep(desk_config)
