import copy

import numpy as np
import pytest
from hypothesis import settings

from llab.config import RunConfig, shipped_config, validate
from llab.model import build_model

settings.register_profile("llab", deadline=None, max_examples=40)
settings.load_profile("llab")


def tiny_raw(**field):
    """Reference model cut down to a 4-point continuum and an 8-mode field (dimension 324)."""
    raw = copy.deepcopy(shipped_config("reference").raw)
    raw["name"] = "tiny"
    raw["atom"]["continuum"]["n_points"] = 4
    raw["field"].update({"u_max": 8.0, "n_u": 4, "n_max": 1} | field)
    return raw


@pytest.fixture(scope="session")
def reference_config() -> RunConfig:
    return shipped_config("reference")


@pytest.fixture(scope="session")
def reference_model(reference_config):
    return build_model(reference_config)


@pytest.fixture(scope="session")
def tiny_model():
    return build_model(validate(tiny_raw()))


@pytest.fixture(scope="session")
def spectral_model():
    return build_model(shipped_config("spectral"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
