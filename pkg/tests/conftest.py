import pytest

from fcsmpcc.machine import MachineParams
from fcsmpcc.mpcc import CostConfig, DiscreteModel


@pytest.fixture
def params():
    return MachineParams()


@pytest.fixture
def model(params):
    return DiscreteModel.from_params(params, 50e-6)


@pytest.fixture
def cost():
    return CostConfig()
