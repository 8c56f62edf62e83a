import pytest

from app.schemas.frequency import FrequencySpec
from app.schemas.operators import OperatorConfig
from app.schemas.potential import Potential
from app.services.diophantine import cf_expand


@pytest.fixture(scope="session")
def golden():
    return cf_expand(FrequencySpec.golden(), 50)


@pytest.fixture(scope="session")
def silver():
    return cf_expand(FrequencySpec.silver(), 40)


@pytest.fixture(scope="session")
def amo():
    return Potential.almost_mathieu()


@pytest.fixture
def free_operator(golden, amo):
    return OperatorConfig(coupling=0.0, frequency=golden, potential=amo)


@pytest.fixture
def amo_operator(golden, amo):
    return OperatorConfig(coupling=0.5, frequency=golden, potential=amo, phase=0.1234)


@pytest.fixture
def run_dir(tmp_path):
    path = tmp_path / "run"
    path.mkdir()
    return path
