import pytest

from mileage_smooth.turbine import TurbineParams, fit_cp


@pytest.fixture(scope="session")
def coeffs():
    return fit_cp()


@pytest.fixture(scope="session")
def params(coeffs):
    return TurbineParams(cp=coeffs)
