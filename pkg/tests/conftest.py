"""Shared baselines.

* ``three_layer``: absorbing cladding (2+0.2i) on [0,1] and [3,4] around a
  core (4+0.1i) on [1,3]; the Green-function and quantization baseline.
* ``homogeneous``: one lossy, non-dispersive medium (2+0.2i) with constant
  chi2. Phase matching is exact there (k2 + k3 = k23), so the closed-form
  coupling tensor solves the Fredholm equation up to discretization error.
"""

import numpy as np
import pytest

from nlqed.greens import Geometry1D, Layer, SpatialGrid1D
from nlqed.materials import Chi2Model, ConstantPermittivity, Material

DOMAIN = 4.0
CHI = Chi2Model("constant", amplitude=0.01)
CLADDING = Material(ConstantPermittivity(2.0 + 0.2j), CHI, "cladding")
CORE = Material(ConstantPermittivity(4.0 + 0.1j), CHI, "core")


def three_layer_geometry():
    return Geometry1D(DOMAIN, (Layer(0.0, 1.0, CLADDING), Layer(1.0, 3.0, CORE), Layer(3.0, 4.0, CLADDING)))


def homogeneous_geometry(eps=2.0 + 0.2j, chi=CHI):
    return Geometry1D.homogeneous(Material(ConstantPermittivity(eps), chi), DOMAIN)


def grid(n):
    return SpatialGrid1D(DOMAIN, n)


def orders(values):
    v = np.asarray(values)
    return np.log2(v[:-1] / v[1:])


@pytest.fixture
def three_layer():
    return three_layer_geometry()


@pytest.fixture
def homogeneous():
    return homogeneous_geometry()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
