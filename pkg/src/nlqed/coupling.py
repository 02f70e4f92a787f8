"""Nonlinear coupling tensor, Fredholm consistency and nonlinear polarization.

Scalar 1D reduction of the chi(2) construction, natural units
(hbar = eps0 = c = 1). For carriers ``W2``, ``W3`` and ``W23 = W2 + W3``
the coupling tensor is

    alpha(x1; x2, x3) = P sqrt(eps''(x2,W2) eps''(x3,W3) / eps''(x1,W23))
                        / eps(x1,W23) * H_x1[chi(x1) g(x1,x2,W2) g(x1,x3,W3)]

with ``P = -i W2^2 W3^2 / (sqrt(pi) W23)`` and ``H`` the Helmholtz operator
at ``W23``. It solves

    int dx sqrt(eps''(x,W23)) alpha(x; x2, x3) g(r, x, W23)
        = P sqrt(eps'' eps'') chi(r) g(r,x2,W2) g(r,x3,W3) / eps(r, W23)

whenever eps(., W23) is uniform where ``chi g g`` lives (e.g. a homogeneous
medium) and ``chi g g`` is outgoing at the window edges (phase matched, or
chi vanishing near the edges).

The second and third tensor indices may be a decimated subset of the grid;
they then carry a coarse quadrature weight.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BandMismatch, VanishingAbsorption
from .greens import (
    Geometry1D,
    SpatialGrid1D,
    apply_helmholtz,
    check_stencil_resolution,
    worker_count,
)
from .materials import Chi2Model
from .quantization import SQRT_PI, SampledField, SlowVariableSet, lookup_green

EPS2_MIN = 1e-6


def coupling_prefactor(omega2: float, omega3: float) -> complex:
    """``hbar^2/(i pi c^2) sqrt(pi/(hbar eps0)) W2^2 W3^2 / W23`` in natural units."""
    return -1j * omega2**2 * omega3**2 / (SQRT_PI * (omega2 + omega3))


def decimated_indices(grid: SpatialGrid1D, count: int | None) -> np.ndarray:
    """``count`` evenly spaced interior node indices, or all nodes for ``None``.

    The two domain edges are excluded: a source placed on the edge puts the
    point-source part of ``H[chi g g]`` on a row the stencil cannot reach.
    """
    if count is None or count >= grid.size:
        return np.arange(grid.size)
    if grid.intervals % (count + 1):
        raise ValueError(f"{count} interior points do not decimate {grid.intervals} intervals evenly")
    step = grid.intervals // (count + 1)
    return np.arange(step, grid.intervals, step)


def parameter_weights(grid: SpatialGrid1D, index: np.ndarray) -> np.ndarray:
    """Quadrature weights for the parameter nodes ``grid.points[index]``.

    The full node set uses the trapezoid weights; an evenly decimated interior
    set uses its coarse spacing (the trapezoid rule for integrands vanishing
    at the edges).
    """
    index = np.asarray(index)
    if index.size == grid.size:
        return grid.weights
    if index.size == 1:
        return np.full(1, grid.h)
    return np.full(index.size, (index[1] - index[0]) * grid.h)


@dataclass(frozen=True)
class CouplingTensor:
    """``values[x1, a, b] = alpha(x1; x2 = index2[a] @ W2, x3 = index3[b] @ W3)``.

    Boundary rows in ``x1`` are zero: the stencil cannot be applied there.
    """

    omega2: float
    omega3: float
    grid: SpatialGrid1D
    values: np.ndarray = field(repr=False)
    index2: np.ndarray = field(repr=False)
    index3: np.ndarray = field(repr=False)
    empty: bool = False

    @property
    def omega23(self) -> float:
        return self.omega2 + self.omega3

    @property
    def carriers(self) -> tuple[float, float, float]:
        return self.omega23, self.omega2, self.omega3

    @property
    def weights2(self) -> np.ndarray:
        return parameter_weights(self.grid, self.index2)

    @property
    def weights3(self) -> np.ndarray:
        return parameter_weights(self.grid, self.index3)

    def swapped(self) -> "CouplingTensor":
        """The same tensor with the roles of (x2, W2) and (x3, W3) exchanged."""
        return CouplingTensor(
            self.omega3, self.omega2, self.grid,
            self.values.transpose(0, 2, 1), self.index3, self.index2, self.empty,
        )

    def scaled(self, factor: complex) -> "CouplingTensor":
        return replace(self, values=self.values * factor)


def _chi_nodes(chi2, geom, grid, w1, w2):
    """chi2 samples on the grid nodes.

    ``chi2`` is ``None`` (take it layer by layer from ``geom``), a
    ``Chi2Model`` applied uniformly, or an array of node samples.
    """
    if chi2 is None:
        return geom.chi2_nodes(grid, w1, w2)
    if isinstance(chi2, Chi2Model):
        return np.full(grid.size, complex(chi2(w1, w2)))
    values = np.asarray(chi2, dtype=complex)
    if values.shape != (grid.size,):
        raise ValueError("chi2 samples do not match the grid")
    return values


def _chi_is_zero(chi2, geom):
    if chi2 is None:
        return geom.chi2_is_zero()
    if isinstance(chi2, Chi2Model):
        return chi2.is_zero
    return not np.any(chi2)


def absorption_floor_violations(geom: Geometry1D, grid: SpatialGrid1D, omega: float, floor: float = EPS2_MIN):
    eps2 = geom.eps_nodes(grid, omega).imag
    bad = np.flatnonzero(eps2 < floor)
    return [(float(grid.points[i]), float(omega)) for i in bad]


def _raw_alpha(chi2, geom, greens, grid, wa, wb, ia, ib):
    w23 = wa + wb
    ga = lookup_green(greens, wa).values[:, ia]
    gb = lookup_green(greens, wb).values[:, ib]
    sa = np.sqrt(np.clip(geom.eps_nodes(grid, wa).imag[ia], 0.0, None))
    sb = np.sqrt(np.clip(geom.eps_nodes(grid, wb).imag[ib], 0.0, None))
    chi = _chi_nodes(chi2, geom, grid, wa, wb)
    eps23 = geom.eps_nodes(grid, w23)[1:-1]
    row = coupling_prefactor(wa, wb) / (np.sqrt(eps23.imag) * eps23)

    out = np.zeros((grid.size, ia.size, ib.size), dtype=complex)

    def block(lo, hi):
        # independent stencil applications over the x1 rows of one x2 slab
        q = chi[:, None, None] * ga[:, lo:hi, None] * gb[:, None, :]
        hq = apply_helmholtz(q, geom, w23, grid)
        out[1:-1, lo:hi] = row[:, None, None] * hq * sa[None, lo:hi, None] * sb[None, None, :]

    step = max(1, 1_000_000 // (grid.size * ib.size))
    slabs = [(lo, min(lo + step, ia.size)) for lo in range(0, ia.size, step)]
    workers = min(worker_count(), len(slabs))
    if workers <= 1:
        for lo, hi in slabs:
            block(lo, hi)
    else:
        # slabs write disjoint slices, so the result does not depend on scheduling
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda bounds: block(*bounds), slabs))
    return out


def compute_alpha(
    chi2,
    geom: Geometry1D,
    greens: dict,
    omega2: float,
    omega3: float,
    grid: SpatialGrid1D,
    index2=None,
    index3=None,
    eps2_min: float = EPS2_MIN,
) -> CouplingTensor:
    """Closed-form coupling tensor, symmetrised over (x2, W2) <-> (x3, W3).

    ``chi2=None`` takes the susceptibility from the geometry's layers; a
    ``Chi2Model`` applies it uniformly; an array gives node samples.
    ``index2``/``index3`` select the
    parameter nodes (default: every node).
    """
    index2 = np.arange(grid.size) if index2 is None else np.asarray(index2)
    index3 = np.arange(grid.size) if index3 is None else np.asarray(index3)
    w23 = omega2 + omega3
    bad = absorption_floor_violations(geom, grid, w23, eps2_min)
    if bad:
        raise VanishingAbsorption(
            f"Im eps(x, {w23:g}) < {eps2_min:g} at {len(bad)} nodes; "
            "the coupling tensor divides by sqrt(Im eps) at the sum frequency",
            bad,
        )
    check_stencil_resolution(geom, w23, grid)
    if _chi_is_zero(chi2, geom):
        zeros = np.zeros((grid.size, index2.size, index3.size), dtype=complex)
        return CouplingTensor(omega2, omega3, grid, zeros, index2, index3, empty=True)

    values = _raw_alpha(chi2, geom, greens, grid, omega2, omega3, index2, index3)
    if omega2 == omega3 and np.array_equal(index2, index3):
        values += values.transpose(0, 2, 1).copy()
    else:
        values += _raw_alpha(chi2, geom, greens, grid, omega3, omega2, index3, index2).transpose(0, 2, 1)
    values *= 0.5
    return CouplingTensor(omega2, omega3, grid, values, index2, index3)


def fredholm_rhs(chi2, geom, greens, omega2, omega3, grid, index2, index3):
    """Right-hand side of the Fredholm equation on ``(x_r, x2, x3)``."""
    w23 = omega2 + omega3
    g2 = lookup_green(greens, omega2).values[:, index2]
    g3 = lookup_green(greens, omega3).values[:, index3]
    s2 = np.sqrt(np.clip(geom.eps_nodes(grid, omega2).imag[index2], 0.0, None))
    s3 = np.sqrt(np.clip(geom.eps_nodes(grid, omega3).imag[index3], 0.0, None))
    chi = _chi_nodes(chi2, geom, grid, omega2, omega3)
    eps23 = geom.eps_nodes(grid, w23)
    row = coupling_prefactor(omega2, omega3) * chi / eps23
    return row[:, None, None] * (g2 * s2)[:, :, None] * (g3 * s3)[:, None, :]


def fredholm_lhs(alpha: CouplingTensor, geom, greens, grid):
    w23 = alpha.omega23
    g23 = lookup_green(greens, w23).values
    s = np.sqrt(np.clip(geom.eps_nodes(grid, w23).imag, 0.0, None)) * grid.weights
    n = grid.size
    flat = (s[:, None] * alpha.values.reshape(n, -1))
    return (g23 @ flat).reshape(alpha.values.shape)


def fredholm_residual(alpha: CouplingTensor, chi2, geom: Geometry1D, greens: dict, grid: SpatialGrid1D) -> float:
    """Max pointwise relative deviation between both sides of the Fredholm equation.

    Parameter nodes on the domain edges are skipped (see
    :func:`decimated_indices`), as are points where the right-hand side is
    below 1e-8 of its peak.
    A vanishing right-hand side with vanishing tensor counts as residual 0.
    """
    rhs = fredholm_rhs(chi2, geom, greens, alpha.omega2, alpha.omega3, grid, alpha.index2, alpha.index3)
    lhs = fredholm_lhs(alpha, geom, greens, grid)
    keep2 = (alpha.index2 > 0) & (alpha.index2 < grid.size - 1)
    keep3 = (alpha.index3 > 0) & (alpha.index3 < grid.size - 1)
    rhs, lhs = rhs[:, keep2][:, :, keep3], lhs[:, keep2][:, :, keep3]
    peak = np.max(np.abs(rhs))
    if peak == 0.0:
        return 0.0 if not np.any(lhs) else float("inf")
    mask = np.abs(rhs) > 1e-8 * peak
    return float(np.max(np.abs(lhs[mask] - rhs[mask]) / np.abs(rhs[mask])))


def dense_inversion_alpha(chi2, geom, greens, omega2, omega3, grid, index2, index3) -> np.ndarray:
    """Oracle: solve the discretised Fredholm equation by a dense linear solve.

    The kernel ``K[r, s] = g(r, s, W23) sqrt(eps''(s, W23)) w_s`` is inverted
    for every ``(x2, x3)`` column of the right-hand side.
    """
    w23 = omega2 + omega3
    g23 = lookup_green(greens, w23).values
    s = np.sqrt(np.clip(geom.eps_nodes(grid, w23).imag, 0.0, None)) * grid.weights
    kernel = g23 * s[None, :]
    rhs = fredholm_rhs(chi2, geom, greens, omega2, omega3, grid, index2, index3)
    n = grid.size
    sol = np.linalg.solve(kernel, rhs.reshape(n, -1))
    return sol.reshape(rhs.shape)


def oracle_deviation(alpha: CouplingTensor, oracle: np.ndarray) -> float:
    """Relative Frobenius distance on interior rows."""
    a, b = alpha.values[1:-1], oracle[1:-1]
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@dataclass(frozen=True)
class PolarizationField:
    omega: float
    values: np.ndarray = field(repr=False)
    part: str = "total"  # reactive | noise | total
    route: str = "response"  # via-alpha | via-field | response | commutator


def reactive_polarization(E2, E3, chi2, omega2=None, omega3=None, geom=None, grid=None) -> PolarizationField:
    """``eps0 chi(x, W2, W3) E2(x) E3(x)``.

    ``E2``/``E3`` are :class:`SampledField` objects (carriers taken from them)
    or plain arrays with ``omega2``/``omega3`` given. ``chi2`` follows
    :func:`compute_alpha`; ``None`` needs ``geom`` and ``grid``.
    """
    if isinstance(E2, SampledField):
        omega2, omega3, e2, e3 = E2.omega, E3.omega, E2.values, E3.values
    else:
        e2, e3 = np.asarray(E2), np.asarray(E3)
    if e2.shape != e3.shape:
        raise ValueError("E2 and E3 are sampled on different grids")
    if isinstance(chi2, Chi2Model):
        chi = complex(chi2(omega2, omega3))
    elif chi2 is None:
        chi = geom.chi2_nodes(grid, omega2, omega3)
    else:
        chi = np.asarray(chi2, dtype=complex)
    return PolarizationField(omega2 + omega3, chi * e2 * e3, "reactive", "response")


def nonlinear_noise_polarization_via_field(
    E2: SampledField,
    E3: SampledField,
    chi2,
    geom: Geometry1D,
    grid: SpatialGrid1D,
    method: str = "analytic",
) -> PolarizationField:
    """``eps0 c^2 / (W23^2 eps(W23)) * H(W23)[chi E2 E3]``.

    ``method="analytic"`` applies the Helmholtz operator by the product rule,
    using ``-E'' = W^2 (eps E + P_N)`` for each factor and the sampled
    derivatives for the cross term; it assumes chi is constant across the
    nodes it is evaluated on (interface nodes use the mean of both sides).
    ``method="stencil"`` uses :func:`apply_helmholtz` and leaves the two
    boundary samples at zero; by linearity it reproduces the via-alpha route
    to roundoff.
    """
    w2, w3 = E2.omega, E3.omega
    w23 = w2 + w3
    check_stencil_resolution(geom, w23, grid)
    chi = _chi_nodes(chi2, geom, grid, w2, w3)
    eps23 = geom.eps_nodes(grid, w23)
    if method == "analytic":
        eps2 = geom.eps_nodes(grid, w2)
        eps3 = geom.eps_nodes(grid, w3)
        e2, e3 = E2.values, E3.values
        hq = chi * (
            w2**2 * (eps2 * e2 + E2.noise) * e3
            + w3**2 * (eps3 * e3 + E3.noise) * e2
            - 2.0 * E2.derivative * E3.derivative
            - w23**2 * eps23 * e2 * e3
        )
    elif method == "stencil":
        hq = np.zeros(grid.size, dtype=complex)
        hq[1:-1] = apply_helmholtz(chi * E2.values * E3.values, geom, w23, grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PolarizationField(w23, hq / (w23**2 * eps23), "noise", "via-field")


def _pair_source(alpha: CouplingTensor, f2, f3, band_weight: float) -> np.ndarray:
    """``A(x1) = sum_ab alpha[x1,a,b] f2[a] f3[b] w2[a] w3[b]`` times ``band_weight``."""
    a2 = np.asarray(f2)[alpha.index2] * alpha.weights2
    a3 = np.asarray(f3)[alpha.index3] * alpha.weights3
    return band_weight * np.einsum("xab,a,b->x", alpha.values, a2, a3)


def nonlinear_noise_polarization_via_alpha(f2, f3, alpha: CouplingTensor, lattice, band_weight: float = 1.0) -> PolarizationField:
    """``(1/i hbar) sqrt(hbar eps0/pi) / W23 * sqrt(eps''(x,W23)) * sum alpha f2 f3``.

    ``lattice`` is a :class:`ModeLattice` (anything with ``eps(omega)`` on
    the alpha grid). ``f2``/``f3`` are lattice amplitudes at W2 and W3 on the
    full grid;
    ``band_weight`` carries the band measure when they are band-averaged
    variables (``sqrt(dW2 dW3)``).
    """
    w23 = alpha.omega23
    s = np.sqrt(np.clip(lattice.eps(w23).imag, 0.0, None))
    values = s * _pair_source(alpha, f2, f3, band_weight) / (1j * SQRT_PI * w23)
    return PolarizationField(w23, values, "noise", "via-alpha")


def decompose_polarization(E, P_N, alpha: CouplingTensor, f2, f3, lattice, band_weight: float = 1.0) -> dict:
    """Reactive and noise parts of the two-annihilator nonlinear polarization.

    The commutator route gives ``P(r) = -(1/W23) sum_s D_L[r, s] A(s)`` with
    ``D_L = eps E + P_N`` at W23 and ``A`` the pair source built from alpha;
    the ``eps E`` piece is the reactive part, the ``P_N`` piece the noise.
    """
    w23 = alpha.omega23
    i = E.omega_index(w23)
    src = np.concatenate((_pair_source(alpha, f2, f3, band_weight), [0.0, 0.0]))
    eps = lattice.eps(w23)
    e_part = eps[:, None] * E.coefficients[i]
    n_part = P_N.coefficients[i]
    total = -(e_part + n_part) @ src / w23
    reactive = -(e_part @ src) / w23
    noise = -(n_part @ src) / w23
    return {
        "reactive": PolarizationField(w23, reactive, "reactive", "commutator"),
        "noise": PolarizationField(w23, noise, "noise", "commutator"),
        "total": PolarizationField(w23, total, "total", "commutator"),
    }


def relative_deviation(a, b, interior: bool = True) -> float:
    """``max |a - b| / max |b|`` (interior nodes by default)."""
    a = np.asarray(getattr(a, "values", a))
    b = np.asarray(getattr(b, "values", b))
    if interior:
        a, b = a[1:-1], b[1:-1]
    peak = np.max(np.abs(b))
    if peak == 0.0:
        return 0.0 if not np.any(a) else float("inf")
    return float(np.max(np.abs(a - b)) / peak)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Trilinear coefficients of the band-reduced interaction.

    ``annihilation[x1, a, b]`` multiplies ``f~^+(x1, W23) f~(x2_a, W2) f~(x3_b, W3)``;
    ``creation`` multiplies the Hermitian-conjugate term
    ``f~^+(x3_b, W3) f~^+(x2_a, W2) f~(x1, W23)``.
    """

    carriers: tuple[float, float, float]
    widths: tuple[float, float, float]
    annihilation: np.ndarray = field(repr=False)
    creation: np.ndarray = field(repr=False)
    weights1: np.ndarray = field(repr=False)
    weights2: np.ndarray = field(repr=False)
    weights3: np.ndarray = field(repr=False)
    bands: tuple[str, str, str] = ("", "", "")

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.creation - self.annihilation.conj()), initial=0.0))

    def orthonormal(self) -> np.ndarray:
        """Annihilation coefficients for unit-commutator modes ``b = sqrt(w) f~``."""
        return self.annihilation / np.sqrt(
            self.weights1[:, None, None] * self.weights2[None, :, None] * self.weights3[None, None, :]
        )


def assemble_H_NL(alpha: CouplingTensor, bands: SlowVariableSet) -> EffectiveHamiltonian:
    """Coefficients ``alpha sqrt(dW1 dW2 dW3) w1 w2 w3`` plus the conjugate block."""
    w23, w2, w3 = alpha.carriers
    try:
        b1 = bands.band_of(w23)
        b2 = bands.band_of(w2)
        b3 = bands.band_of(w3)
    except KeyError as exc:
        raise BandMismatch(f"carriers {alpha.carriers} do not fit the bands: {exc}") from exc
    widths = (bands.widths[b1], bands.widths[b2], bands.widths[b3])
    w1 = alpha.grid.weights
    wt2, wt3 = alpha.weights2, alpha.weights3
    coef = (
        alpha.values
        * np.sqrt(widths[0] * widths[1] * widths[2])
        * w1[:, None, None] * wt2[None, :, None] * wt3[None, None, :]
    )
    return EffectiveHamiltonian(alpha.carriers, widths, coef, coef.conj(), w1, wt2, wt3, (b1, b2, b3))
