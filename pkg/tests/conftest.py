import pytest

from ri2d.kernel import build_kernel
from ri2d.rng import RngSeed


@pytest.fixture(scope="session")
def kernel():
    return build_kernel()


@pytest.fixture
def seed():
    return RngSeed(20240607)
