import pytest

from fracbd.classical import ModelParams

# reference material, not part of the suite
collect_ignore = ['examples']


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the full-size acceptance checks')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-size acceptance check (run with --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def birth_dominant():
    return ModelParams(2.0, 1.0)


@pytest.fixture
def death_dominant():
    return ModelParams(1.0, 2.0)


@pytest.fixture
def balanced():
    return ModelParams(1.0, 1.0)
