import pytest

import mecoffload as m


@pytest.fixture(scope="session")
def default_config():
    """Standard operating point: all config defaults."""
    return m.load_config()


@pytest.fixture(scope="session")
def params(default_config):
    return m.build_params(default_config)
