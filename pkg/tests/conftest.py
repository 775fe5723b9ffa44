import pytest

from tdslab.construct import ConstructOpts, escape_search
from tdslab.verify import constants


@pytest.fixture(scope="session")
def cert():
    """One escape certificate shared by every construction test."""
    return escape_search()


@pytest.fixture(scope="session")
def opts(cert):
    return ConstructOpts(certificate=cert)


@pytest.fixture(scope="session")
def consts():
    return constants(1.0)
