import pytest

from mas_track.acceptance import RunCache


@pytest.fixture(scope="session")
def cache():
    """Shared run cache so the full-horizon fixture integrations happen once
    per test session."""
    return RunCache()
