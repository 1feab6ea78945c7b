import pytest


@pytest.fixture(scope="session")
def ser_cache_dir(tmp_path_factory):
    """Shared cache so simulated SER curves are built at most once per run."""
    return str(tmp_path_factory.mktemp("ser_cache"))
