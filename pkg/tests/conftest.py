import numpy as np
import pytest

from bqnnpf.powerflow import ScenarioConfig, load_case, sample_scenarios, split_dataset
from bqnnpf.quantum import kernels


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per gate-kernel backend, restoring the previous one."""
    if request.param == "numba" and not kernels.HAS_NUMBA:
        pytest.skip("numba unavailable")
    prev = kernels.get_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture(scope="session")
def ieee6():
    return load_case("ieee6")


@pytest.fixture(scope="session")
def ieee30():
    return load_case("ieee30")


@pytest.fixture(scope="session")
def small_data(ieee6):
    """120 solved 6-bus scenarios at 50% penetration, split 60/40."""
    ds = sample_scenarios(ieee6, ScenarioConfig(penetration=0.5, seed=7, count=120))
    train, test = split_dataset(ds, 0.6, 7)
    return ds, train, test


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
