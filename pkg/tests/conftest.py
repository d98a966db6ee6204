import pytest

from liqshock.params import ModelParams


@pytest.fixture
def desk_params():
    return ModelParams(sigma=0.3, mu=0.06, nu01=1.0, nu10=2.0, gamma=1.0, T=1.0)
