import pytest

from reptalk.equilibrium import InformationStructure, solve_cutoff

from cases import FIG1_PAIR, HYPER_PAIR


@pytest.fixture(scope="session")
def fig1_xi():
    return InformationStructure(0.6, 0.1, FIG1_PAIR)


@pytest.fixture(scope="session")
def fig1_solution(fig1_xi):
    return solve_cutoff(fig1_xi)


@pytest.fixture(scope="session")
def hyper_pair():
    return HYPER_PAIR
