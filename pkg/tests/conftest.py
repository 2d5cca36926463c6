import numpy as np
import pytest

from sockf import battery, fastpath


@pytest.fixture(scope="session", autouse=True)
def _compile_kernels():
    # One-time JIT compile so per-test timing stays flat.
    fastpath.warmup()


@pytest.fixture(scope="session")
def ref_params():
    return battery.load_ecm_params()


@pytest.fixture(scope="session")
def ref_ocv():
    return battery.load_ocv_curve()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


@pytest.fixture(scope="session")
def spd_factory():
    return random_spd
