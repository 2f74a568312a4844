import pytest

from drybeam.actions import EpisodeConfig, encode_action
from drybeam.cache import RolloutEngine
from drybeam.envs.dryer import DryerParams, PaperDryerEnv
from drybeam.kvstore import InMemoryStore


@pytest.fixture(scope="session")
def dryer_params():
    return DryerParams.default()


@pytest.fixture(scope="session")
def warm_kernel(dryer_params):
    """Compile the numba kernel once so per-test timings stay honest."""
    env = PaperDryerEnv(dryer_params)
    env.reset(EpisodeConfig(speed_factor=0.25))
    env.step(encode_action("SJR", 5))
    return True


@pytest.fixture
def dryer_engine(dryer_params, warm_kernel):
    return RolloutEngine(lambda: PaperDryerEnv(dryer_params), InMemoryStore())


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: spec acceptance criteria")
