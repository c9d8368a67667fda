import pytest

from qlbm import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the numba kernels once up front so timed tests measure physics,
    not JIT latency."""
    _kernels.warm_up()
