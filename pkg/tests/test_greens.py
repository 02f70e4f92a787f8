import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import grid, homogeneous_geometry, orders, three_layer_geometry
from nlqed.errors import CoincidentPoints, ConfigError, GridTooCoarse, NonAbsorbing
from nlqed.greens import (
    Geometry1D,
    Layer,
    SpatialGrid1D,
    apply_helmholtz,
    green_1d,
    green_fields,
    green_homogeneous_3d,
    helmholtz_residual,
    reciprocity_defect,
    verify_green_identity,
)
from nlqed.materials import ConstantPermittivity, Material


def test_homogeneous_matches_closed_form():
    eps, omega = 2.0 + 0.2j, 1.3
    geom = homogeneous_geometry(eps)
    g = green_1d(geom, omega, grid(64))
    k = omega * np.sqrt(eps)
    x = grid(64).points
    exact = 1j / (2 * k) * np.exp(1j * k * np.abs(x[:, None] - x[None, :]))
    assert np.max(np.abs(g.values - exact)) < 1e-13


def test_vacuum_diagonal():
    geom = homogeneous_geometry(1.0 + 0j)
    g = green_1d(geom, 1.0, grid(32))
    assert np.allclose(np.diag(g.values), 0.5j)


def test_helmholtz_residual_converges_at_second_order(three_layer):
    res = [helmholtz_residual(three_layer, 2.0, grid(n)) for n in (128, 256, 512)]
    assert res[1] < 5e-2
    assert np.all((orders(res) > 1.7) & (orders(res) < 2.3))


def test_reciprocity(three_layer):
    g = green_1d(three_layer, 2.0, grid(128))
    assert reciprocity_defect(g) < 1e-12


def test_green_identity_converges(three_layer):
    res = [verify_green_identity(three_layer, 2.0, grid(n)) for n in (128, 256, 512)]
    assert res[-1] < 1e-3
    assert res[0] > res[1] > res[2]


def test_green_identity_needs_absorption():
    with pytest.raises(NonAbsorbing):
        verify_green_identity(homogeneous_geometry(1.0 + 0j), 1.0, grid(64))


def test_green_identity_lossless_terminal_layers():
    # absorption only in the middle; the terminal layers radiate
    vac = Material(ConstantPermittivity(1.0))
    lossy = Material(ConstantPermittivity(3.0 + 0.3j))
    geom = Geometry1D(4.0, (Layer(0, 1, vac), Layer(1, 3, lossy), Layer(3, 4, vac)))
    assert verify_green_identity(geom, 1.5, grid(512)) < 1e-3


def test_coarse_grid_guard(three_layer):
    with pytest.raises(GridTooCoarse):
        apply_helmholtz(np.zeros(33), three_layer, 6.0, grid(32))


def test_geometry_validation():
    m = Material(ConstantPermittivity(2.0))
    with pytest.raises(ConfigError):
        Geometry1D(4.0, (Layer(0, 1, m), Layer(1.5, 4, m)))
    with pytest.raises(ConfigError):
        Geometry1D(4.0, (Layer(0, 3, m),))
    with pytest.raises(ValueError):
        SpatialGrid1D(1.0, 16)


def test_parallel_green_fields_match_serial(three_layer, monkeypatch):
    g = grid(64)
    monkeypatch.setenv("NLQED_THREADS", "4")
    par = green_fields(three_layer, [1.0, 1.5, 2.0], g)
    monkeypatch.setenv("NLQED_THREADS", "1")
    ser = green_fields(three_layer, [1.0, 1.5, 2.0], g)
    for w in par:
        assert np.array_equal(par[w].values, ser[w].values)


@settings(max_examples=20, deadline=None)
@given(
    eps_re=st.lists(st.floats(1.0, 6.0), min_size=3, max_size=3),
    eps_im=st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
    omega=st.floats(0.3, 3.0),
)
def test_reciprocity_random_stacks(eps_re, eps_im, omega):
    mats = [Material(ConstantPermittivity(complex(a, b))) for a, b in zip(eps_re, eps_im)]
    geom = Geometry1D(4.0, (Layer(0, 1, mats[0]), Layer(1, 3, mats[1]), Layer(3, 4, mats[2])))
    assert reciprocity_defect(green_1d(geom, omega, grid(64))) < 1e-10


def test_dyadic_green_function():
    eps, omega = 2.0 + 0.1j, 1.0
    r, s = np.array([0.3, 0.2, -0.4]), np.array([0.0, 0.0, 0.0])
    G = green_homogeneous_3d(eps, omega, r, s)
    assert np.allclose(G, G.T)
    assert np.allclose(green_homogeneous_3d(eps, omega, s, r), G)
    # far field is transverse: (I - uu) e^{ikR}/(4 pi R)
    far = np.array([0.0, 0.0, 400.0])
    Gf = green_homogeneous_3d(1.0, omega, far, s)
    assert abs(Gf[2, 2]) < 1e-2 * abs(Gf[0, 0])
    with pytest.raises(CoincidentPoints):
        green_homogeneous_3d(eps, omega, s, s)
