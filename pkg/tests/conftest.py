import numpy as np
import pytest

from lorentzhom.perfem import ElasticTensor
from lorentzhom.unitcell import FieldSpec, build_geometry, sample_field

# acceptance lines keyed by criterion number, printed at the end of the session
RESULTS = {}


def cube(n, size=0.5):
    return build_geometry({"shape": "cube", "center": [0.5, 0.5, 0.5], "size": size, "n": n})


def example_field(geom, gamma="4"):
    spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": gamma,
                                  "support": "inclusion"})
    return spec, sample_field(spec, geom)


@pytest.fixture(scope="session")
def iso():
    return ElasticTensor.isotropic(1.0, 1.0)


@pytest.fixture(scope="session")
def geom16():
    return cube(16)


@pytest.fixture(scope="session")
def example16(geom16):
    return example_field(geom16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = [RESULTS[k] for k in sorted(RESULTS)]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
