import math
import os

import numpy as np
import pytest

from qsmc.model import build_killing, ou_example_model


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QSMC_LARGE_N") == "1":
        return
    skip = pytest.mark.skip(reason="set QSMC_LARGE_N=1 to run")
    for item in items:
        if "largeN" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def ou():
    target, drift = ou_example_model()
    return target, drift, build_killing(target, drift)


@pytest.fixture(scope="session")
def ou_phi():
    """``phi = pi / gamma`` for the OU example, as a plain function of y."""

    def phi(y):
        return np.exp(-((y + 1.0) ** 2) / 4.0 + (y - 2.0) ** 2 / 8.0)

    return phi


def normal_cdf(mean, var):
    from scipy import stats

    return stats.norm(mean, math.sqrt(var)).cdf
