import pytest
from prefect.testing.utilities import prefect_test_harness

from hetnetcache.config import SystemConfig


@pytest.fixture(autouse=True, scope="session")
def prefect_backend():
    """Run every flow against a throwaway prefect backend."""
    with prefect_test_harness():
        yield


@pytest.fixture
def cfg() -> SystemConfig:
    return SystemConfig()


@pytest.fixture
def no_user_env(monkeypatch):
    for name in ("HETNETCACHE_CONFIG", "HETNETCACHE_SEED", "HETNETCACHE_OUT_DIR"):
        monkeypatch.delenv(name, raising=False)
