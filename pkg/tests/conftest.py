import pytest

from gasket_szego import eigenbasis


@pytest.fixture(scope="session")
def level4():
    return eigenbasis.level_basis(4)


@pytest.fixture(scope="session")
def level5():
    return eigenbasis.level_basis(5)


@pytest.fixture(scope="session")
def level6():
    return eigenbasis.level_basis(6)
