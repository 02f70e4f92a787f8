import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CHI, grid, homogeneous_geometry, orders
from nlqed.coupling import (
    assemble_H_NL,
    compute_alpha,
    coupling_prefactor,
    decimated_indices,
    decompose_polarization,
    dense_inversion_alpha,
    fredholm_residual,
    nonlinear_noise_polarization_via_alpha,
    nonlinear_noise_polarization_via_field,
    oracle_deviation,
    reactive_polarization,
    relative_deviation,
)
from nlqed.errors import BandMismatch, GridTooCoarse, VanishingAbsorption
from nlqed.greens import Geometry1D, green_fields
from nlqed.materials import Chi2Model, ConstantPermittivity, FrequencyGrid, LossScaled, Material
from nlqed.quantization import (
    ModeLattice,
    assemble_E,
    linear_noise_polarization,
    random_smooth_amplitudes,
    reduce_to_bands,
    sample_field,
)

W2, W3 = 2.0, 1.5


def alpha_setup(n, geom=None, count=31, w2=W2, w3=W3):
    geom = geom or homogeneous_geometry()
    g = grid(n)
    gs = green_fields(geom, sorted({w2, w3, w2 + w3}), g)
    idx = decimated_indices(g, count)
    return geom, g, gs, idx, compute_alpha(None, geom, gs, w2, w3, g, idx, idx)


def test_prefactor():
    assert coupling_prefactor(2.0, 1.5) == pytest.approx(-1j * 4 * 2.25 / (np.sqrt(np.pi) * 3.5))


def test_fredholm_residual_order_two():
    res = []
    for n in (128, 256, 512):
        geom, g, gs, _, alpha = alpha_setup(n)
        res.append(fredholm_residual(alpha, None, geom, gs, g))
    assert res[1] < 5e-2
    assert np.all(np.abs(orders(res) - 2.0) < 0.3)


def test_fredholm_residual_detects_scaling():
    geom, g, gs, _, alpha = alpha_setup(256)
    assert fredholm_residual(alpha.scaled(1.1), None, geom, gs, g) == pytest.approx(0.1, abs=0.01)


def test_closed_form_matches_dense_oracle():
    devs = []
    for n in (128, 256):
        geom, g, gs, idx, alpha = alpha_setup(n)
        devs.append(oracle_deviation(alpha, dense_inversion_alpha(None, geom, gs, W2, W3, g, idx, idx)))
    assert devs[0] < 5e-2 and devs[1] < devs[0]


def test_exchange_symmetry_exact():
    geom = homogeneous_geometry()
    g = grid(64)
    gs = green_fields(geom, [1.0, 2.0], g)
    alpha = compute_alpha(None, geom, gs, 1.0, 1.0, g)
    assert np.array_equal(alpha.values, alpha.values.transpose(0, 2, 1))
    # distinct carriers: swapping the (x, W) pairs maps the tensor onto itself
    gs = green_fields(geom, [0.5, 1.0, 1.5], g)
    a = compute_alpha(None, geom, gs, 1.0, 0.5, g)
    b = compute_alpha(None, geom, gs, 0.5, 1.0, g)
    assert np.array_equal(a.swapped().values, b.values)


def test_zero_chi_gives_empty_alpha():
    geom = homogeneous_geometry(chi=Chi2Model())
    g = grid(64)
    gs = green_fields(geom, [0.5, 1.0, 1.5], g)
    alpha = compute_alpha(None, geom, gs, 1.0, 0.5, g)
    assert alpha.empty and not np.any(alpha.values)
    assert fredholm_residual(alpha, None, geom, gs, g) == 0.0


def test_vanishing_absorption_lists_locations():
    geom = homogeneous_geometry(2.0 + 0j)
    g = grid(64)
    gs = green_fields(geom, [0.5, 1.0, 1.5], g)
    with pytest.raises(VanishingAbsorption) as info:
        compute_alpha(None, geom, gs, 1.0, 0.5, g)
    assert len(info.value.locations) == g.size
    assert info.value.locations[0] == (0.0, 1.5)


def test_coarse_grid_guard():
    geom = homogeneous_geometry()
    g = grid(32)
    gs = green_fields(geom, [3.0, 4.0, 7.0], g)
    with pytest.raises(GridTooCoarse):
        compute_alpha(None, geom, gs, 3.0, 4.0, g)


def noise_setup(n, geom=None, seed=7, w2=1.0, w3=0.75):
    geom = geom or homogeneous_geometry()
    g = grid(n)
    # the lattice reaches the sum frequency so that decompositions can use E(W23)
    lat = ModeLattice(geom, g, FrequencyGrid.uniform(w3, w2 + w3, 5))
    gs = green_fields(geom, lat.omegas, g)
    E, P_N = assemble_E(lat, gs), linear_noise_polarization(lat)
    rng = np.random.default_rng(seed)
    f2, f3 = random_smooth_amplitudes(g, rng), random_smooth_amplitudes(g, rng)
    alpha = compute_alpha(None, geom, gs, w2, w3, g)
    return geom, g, lat, E, P_N, f2, f3, alpha


def test_two_path_noise_polarization_order_two():
    devs = []
    for n in (48, 96, 192):
        geom, g, lat, E, P_N, f2, f3, alpha = noise_setup(n)
        pa = nonlinear_noise_polarization_via_alpha(f2, f3, alpha, lat)
        s2, s3 = sample_field(E, P_N, f2, 1.0), sample_field(E, P_N, f3, 0.75)
        pf = nonlinear_noise_polarization_via_field(s2, s3, None, geom, g)
        assert (pa.part, pa.route, pf.route) == ("noise", "via-alpha", "via-field")
        devs.append(relative_deviation(pf, pa))
    assert devs[0] < 5e-2
    assert devs[0] > devs[1] > devs[2]
    assert np.all(np.abs(orders(devs) - 2.0) < 0.3)


def test_stencil_route_equals_alpha_route():
    geom, g, lat, E, P_N, f2, f3, alpha = noise_setup(48)
    pa = nonlinear_noise_polarization_via_alpha(f2, f3, alpha, lat)
    s2, s3 = sample_field(E, P_N, f2, 1.0), sample_field(E, P_N, f3, 0.75)
    ps = nonlinear_noise_polarization_via_field(s2, s3, None, geom, g, method="stencil")
    assert relative_deviation(ps, pa) < 1e-10


def test_decomposition_sum_rule_and_reactive_route():
    geom, g, lat, E, P_N, f2, f3, alpha = noise_setup(96)
    parts = decompose_polarization(E, P_N, alpha, f2, f3, lat)
    total = parts["reactive"].values + parts["noise"].values
    assert np.max(np.abs(total - parts["total"].values)) <= 1e-13 * np.max(np.abs(total))
    pa = nonlinear_noise_polarization_via_alpha(f2, f3, alpha, lat)
    assert relative_deviation(parts["noise"], pa) < 1e-12
    s2, s3 = sample_field(E, P_N, f2, 1.0), sample_field(E, P_N, f3, 0.75)
    assert relative_deviation(parts["reactive"], reactive_polarization(s2, s3, None, geom=geom, grid=g)) < 5e-3


def test_reactive_polarization_properties():
    x = np.linspace(0, 4, 65)
    k2, k3 = 1.3, 0.4
    e2, e3 = np.exp(1j * k2 * x), np.exp(1j * k3 * x)
    p = reactive_polarization(e2, e3, CHI, 1.0, 0.5)
    assert np.allclose(p.values, 0.01 * np.exp(1j * (k2 + k3) * x))
    assert np.allclose(reactive_polarization(3 * e2, e3, CHI, 1.0, 0.5).values, 3 * p.values)
    assert not np.any(reactive_polarization(0 * e2, e3, CHI, 1.0, 0.5).values)
    assert (p.part, p.route, p.omega) == ("reactive", "response", 1.5)


def test_via_alpha_single_pair():
    geom, g, lat, E, P_N, f2, f3, alpha = noise_setup(48)
    a, b = 10, 30
    e2 = np.zeros(g.size); e2[a] = 1.0
    e3 = np.zeros(g.size); e3[b] = 1.0
    p = nonlinear_noise_polarization_via_alpha(e2, e3, alpha, lat)
    s = np.sqrt(lat.eps(1.75).imag)
    expected = s * alpha.values[:, a, b] * g.h**2 / (1j * np.sqrt(np.pi) * 1.75)
    assert np.allclose(p.values, expected, rtol=1e-14, atol=0)


def _loss_scan(lams, n=96, seed=3):
    w2, w3 = 1.0, 0.75

    class Base:
        """Weak loss (2e-3) at the field frequencies, strong loss at the sum."""

        background = 2.0

        def __call__(self, w):
            w = np.asarray(w, float)
            out = np.where(np.isclose(w, w2 + w3), 2 + 0.2j, 2 + 0.002j)
            return out if out.ndim else complex(out)

        def span_requirement(self):
            return 0.0

    g = grid(n)
    rng = np.random.default_rng(seed)
    f2, f3 = random_smooth_amplitudes(g, rng), random_smooth_amplitudes(g, rng)
    norms = []
    for lam in lams:
        geom = Geometry1D.homogeneous(Material(LossScaled(Base(), lam, only_at=(w2, w3)), CHI), 4.0)
        lat = ModeLattice(geom, g, FrequencyGrid(np.array([w3, w2])))
        gs = green_fields(geom, [w3, w2], g)
        alpha = compute_alpha(None, geom, gs, w2, w3, g)
        norms.append(np.linalg.norm(nonlinear_noise_polarization_via_alpha(f2, f3, alpha, lat).values))
    return np.array(norms)


def test_loss_scaling_is_linear():
    lams = np.array([1.0, 0.25, 1.0 / 16])
    norms = _loss_scan(lams)
    assert np.all(np.abs(norms / (lams * norms[0]) - 1) < 1e-2)
    slope, intercept = np.polyfit(lams, norms, 1)
    assert abs(intercept) < 1e-2 * norms[0]


def test_hamiltonian_structure():
    geom, g, gs, idx, alpha = alpha_setup(128, count=15)
    lat = ModeLattice(geom, g, FrequencyGrid.uniform(1.0, 4.0, 31))
    bands = reduce_to_bands(lat, {"p": (3.5, 0.3), "s": (2.0, 0.3), "i": (1.5, 0.3)})
    H = assemble_H_NL(alpha, bands)
    assert H.hermiticity_defect() == 0.0
    wide = reduce_to_bands(lat, {"p": (3.5, 0.5), "s": (2.0, 0.5), "i": (1.5, 0.5)})
    H2 = assemble_H_NL(alpha, wide)
    ratio = np.sqrt(np.prod(H2.widths) / np.prod(H.widths))
    assert np.allclose(H2.annihilation, ratio * H.annihilation, rtol=1e-14, atol=0)
    with pytest.raises(BandMismatch):
        assemble_H_NL(alpha, reduce_to_bands(lat, {"p": (3.2, 0.3), "s": (2.0, 0.3), "i": (1.5, 0.3)}))


def test_hamiltonian_scaling_doubling_bands():
    geom, g, gs, idx, alpha = alpha_setup(128, count=15)
    # three grid points per band in both cases; doubling the spacing doubles every width
    lat = ModeLattice(geom, g, FrequencyGrid.uniform(1.0, 4.0, 61))
    small = assemble_H_NL(alpha, reduce_to_bands(lat, {"p": (3.5, 0.15), "s": (2.0, 0.15), "i": (1.5, 0.15)}))
    lat2 = ModeLattice(geom, g, FrequencyGrid.uniform(1.0, 4.0, 31))
    big = assemble_H_NL(alpha, reduce_to_bands(lat2, {"p": (3.5, 0.3), "s": (2.0, 0.3), "i": (1.5, 0.3)}))
    assert np.allclose(big.widths, 2 * np.array(small.widths))
    assert np.allclose(big.annihilation, 2 * np.sqrt(2) * small.annihilation, rtol=1e-13, atol=0)


def test_fock_space_hermiticity():
    """One mode per band: H = C a^+ b c + D c^+ b^+ a is Hermitian iff D = conj(C)."""
    geom, g, gs, idx, alpha = alpha_setup(128, count=15)
    lat = ModeLattice(geom, g, FrequencyGrid.uniform(1.4, 3.6, 23))
    H = assemble_H_NL(alpha, reduce_to_bands(lat, {"p": (3.5, 0.3), "s": (2.0, 0.3), "i": (1.5, 0.3)}))
    c, d = H.annihilation[40, 5, 9], H.creation[40, 5, 9]
    cutoff = 3
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1)
    eye = np.eye(cutoff)
    A, B, C = (np.kron(np.kron(a, eye), eye), np.kron(np.kron(eye, a), eye), np.kron(np.kron(eye, eye), a))
    op = c * A.T @ B @ C + d * C.T @ B.T @ A
    assert np.max(np.abs(op - op.conj().T)) < 1e-15 * np.max(np.abs(op))


@settings(max_examples=8, deadline=None)
@given(w2=st.floats(0.5, 1.5), w3=st.floats(0.5, 1.5), amp=st.floats(-1, 1))
def test_alpha_linear_in_chi_and_symmetric(w2, w3, amp):
    g = grid(64)
    geom = homogeneous_geometry(chi=Chi2Model("constant", amplitude=amp))
    gs = green_fields(geom, sorted({w2, w3, w2 + w3}), g)
    a = compute_alpha(None, geom, gs, w2, w3, g)
    b = compute_alpha(None, geom, gs, w3, w2, g)
    assert np.array_equal(a.swapped().values, b.values)
    unit = compute_alpha(Chi2Model("constant", amplitude=1.0), geom, gs, w2, w3, g)
    assert np.linalg.norm(a.values - amp * unit.values) <= 1e-13 * np.linalg.norm(unit.values)
