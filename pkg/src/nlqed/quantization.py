"""Discretised dynamical variables and the linear field assemblies.

Fields are kept as coefficient maps: ``E(x, w) = sum_m c[w, x, m] f_m(w)``
where the modes ``m`` are the spatial lattice nodes followed by two
collective modes for the semi-infinite terminal layers (left, right).

Discrete commutator convention::

    [f(x, w), f^+(x', w')] = delta_xx' delta_ww' / (w_x * dw)

with trapezoid weights ``w_x``; the terminal modes have unit weight. With
this choice every continuum identity becomes a matrix identity up to
quadrature error. Natural units hbar = eps0 = c = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGreen, OverlappingBands
from .greens import Geometry1D, GreenField, SpatialGrid1D
from .materials import FrequencyGrid

SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class ModeLattice:
    geometry: Geometry1D
    grid: SpatialGrid1D
    frequencies: FrequencyGrid

    @property
    def omegas(self) -> np.ndarray:
        return self.frequencies.points

    @property
    def dx(self) -> np.ndarray:
        return self.grid.weights

    @property
    def domega(self) -> float:
        return self.frequencies.spacing

    @property
    def n_modes(self) -> int:
        return self.grid.size + 2

    @property
    def mode_weights(self) -> np.ndarray:
        return np.concatenate((self.grid.weights, [1.0, 1.0]))

    def eps(self, omega: float) -> np.ndarray:
        return self.geometry.eps_nodes(self.grid, omega)


@dataclass(frozen=True)
class FieldAssembly:
    """Linear map from f-amplitudes to field samples, one block per frequency.

    ``coefficients`` has shape ``(n_omega, n_x, n_modes)``; ``derivative``
    (same shape, optional) holds the x-derivative of the map.
    """

    kind: str
    omegas: np.ndarray
    coefficients: np.ndarray = field(repr=False)
    derivative: np.ndarray | None = field(default=None, repr=False)

    def apply(self, amplitudes, omega_index=None):
        f = _pad_amplitudes(amplitudes, self.coefficients.shape[-1])
        if omega_index is None:
            return np.einsum("wxm,wm->wx", self.coefficients, f)
        return self.coefficients[omega_index] @ f

    def omega_index(self, omega: float) -> int:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        if not np.isclose(self.omegas[i], omega, rtol=1e-12, atol=0.0):
            raise KeyError(f"no block for omega={omega}")
        return i


def _pad_amplitudes(f, n_modes):
    f = np.asarray(f, dtype=complex)
    if f.shape[-1] == n_modes - 2:
        pad = [(0, 0)] * (f.ndim - 1) + [(0, 2)]
        f = np.pad(f, pad)
    if f.shape[-1] != n_modes:
        raise ValueError(f"expected {n_modes} or {n_modes - 2} amplitudes per frequency")
    return f


def _e_block(lattice: ModeLattice, green: GreenField, values: np.ndarray) -> np.ndarray:
    omega = green.omega
    eps2 = np.clip(lattice.eps(omega).imag, 0.0, None)
    pref = 1j / SQRT_PI * omega**2
    bulk = pref * values * (np.sqrt(eps2) * lattice.dx)[None, :]
    # collective terminal modes: int_edge^inf w^2 eps'' |e^{ik s}|^2 ds = Re k
    k_left, k_right = green.terminal_k
    left = pref * values[:, 0] * np.sqrt(max(k_left.real, 0.0)) / omega
    right = pref * values[:, -1] * np.sqrt(max(k_right.real, 0.0)) / omega
    return np.column_stack((bulk, left, right))


def assemble_E(lattice: ModeLattice, greens: dict) -> FieldAssembly:
    """Electric-field coefficients ``i/sqrt(pi) w^2 sqrt(eps''(x')) g(x, x', w) w_x'``."""
    blocks, dblocks = [], []
    for omega in lattice.omegas:
        green = lookup_green(greens, omega)
        blocks.append(_e_block(lattice, green, green.values))
        dblocks.append(_e_block(lattice, green, green.derivative))
    return FieldAssembly("E", lattice.omegas.copy(), np.array(blocks), np.array(dblocks))


def lookup_green(greens: dict, omega: float) -> GreenField:
    for key, green in greens.items():
        if np.isclose(key, omega, rtol=1e-12, atol=0.0):
            return green
    raise MissingGreen(f"no Green function at lattice frequency {omega:g}")


def linear_noise_polarization(lattice: ModeLattice) -> FieldAssembly:
    """Local map ``P_N(x, w) = i/sqrt(pi) sqrt(eps''(x, w)) f(x, w)``."""
    n = lattice.grid.size
    blocks = np.zeros((lattice.omegas.size, n, n + 2), dtype=complex)
    for i, omega in enumerate(lattice.omegas):
        eps2 = np.clip(lattice.eps(omega).imag, 0.0, None)
        blocks[i, :, :n] = np.diag(1j / SQRT_PI * np.sqrt(eps2))
    return FieldAssembly("P_N", lattice.omegas.copy(), blocks)


def assemble_D_linear(E: FieldAssembly, P_N: FieldAssembly, lattice: ModeLattice) -> FieldAssembly:
    """``D_L = eps E + P_N`` as a coefficient map."""
    if E.coefficients.shape != P_N.coefficients.shape:
        raise ValueError("E and P_N assemblies live on different lattices")
    eps = np.array([lattice.eps(w) for w in lattice.omegas])
    coef = eps[:, :, None] * E.coefficients + P_N.coefficients
    return FieldAssembly("D_L", lattice.omegas.copy(), coef)


def displacement_two_route_defect(E: FieldAssembly, D: FieldAssembly, lattice: ModeLattice) -> float:
    """Relative deviation of ``-w^-2 d^2E/dx^2`` from the ``eps E + P_N`` route.

    Interior nodes only; worst frequency block. The norm is Hilbert-Schmidt
    between orthonormal modes and L2 field samples, i.e. rows scaled by
    ``sqrt(w_x)`` and columns by ``1/sqrt(mode weight)``.
    """
    h = lattice.grid.h
    rows = np.sqrt(lattice.dx[1:-1])[:, None]
    cols = 1.0 / np.sqrt(lattice.mode_weights)[None, :]
    worst = 0.0
    for i, omega in enumerate(lattice.omegas):
        c = E.coefficients[i]
        curl = -(c[2:] - 2.0 * c[1:-1] + c[:-2]) / (h**2 * omega**2)
        ref = D.coefficients[i, 1:-1]
        err = np.linalg.norm(rows * (curl - ref) * cols)
        worst = max(worst, float(err / np.linalg.norm(rows * ref * cols)))
    return worst


@dataclass(frozen=True)
class CommutatorCheck:
    residual: float
    construction_defect: float
    passed: bool


def E_commutator_terms(E: FieldAssembly, greens: dict, lattice: ModeLattice, index: int):
    """The three forms of ``[E(x,w), E^+(x',w)] * dw`` at one frequency.

    Returns ``(mode_sum, quadrature, im_g)``: the sum over modes of
    ``c c^* / weight``; ``w^4/pi`` times the eps''-weighted g g^* quadrature
    (including terminal layers); and ``w^2/pi Im g``.
    """
    omega = E.omegas[index]
    c = E.coefficients[index]
    mode_sum = (c / lattice.mode_weights) @ c.conj().T
    green = lookup_green(greens, omega)
    eps2 = np.clip(lattice.eps(omega).imag, 0.0, None)
    g = green.values
    quad = (g * (eps2 * lattice.dx)) @ g.conj().T
    k_left, k_right = green.terminal_k
    g0, gx = green.edge_columns
    quad = quad + (
        max(k_left.real, 0.0) * np.outer(g0, g0.conj())
        + max(k_right.real, 0.0) * np.outer(gx, gx.conj())
    ) / omega**2
    quad = omega**4 / np.pi * quad
    im_g = omega**2 / np.pi * g.imag
    return mode_sum, quad, im_g


def check_E_commutator(E: FieldAssembly, greens: dict, lattice: ModeLattice, tol: float = 1e-3) -> CommutatorCheck:
    """Compare the discrete field commutator with ``(w^2/pi) Im g``.

    ``residual`` (worst over frequencies, relative to ``max |Im g|``) is the
    Green-identity quadrature error; ``construction_defect`` compares the mode
    sum with the rearranged quadrature and is roundoff by construction.
    """
    residual = construction = 0.0
    for i in range(E.omegas.size):
        mode_sum, quad, im_g = E_commutator_terms(E, greens, lattice, i)
        scale = np.max(np.abs(im_g))
        residual = max(residual, float(np.max(np.abs(mode_sum - im_g)) / scale))
        construction = max(construction, float(np.max(np.abs(mode_sum - quad)) / scale))
    return CommutatorCheck(residual, construction, residual < tol)


@dataclass(frozen=True)
class SampledField:
    """Field samples at one carrier with what the analytic Helmholtz route needs."""

    omega: float
    values: np.ndarray
    derivative: np.ndarray
    noise: np.ndarray


def sample_field(E: FieldAssembly, P_N: FieldAssembly, amplitudes, omega: float, weight: float = 1.0) -> SampledField:
    """Evaluate E, dE/dx and P_N at ``omega`` for lattice amplitudes ``f``.

    ``weight`` multiplies every output, e.g. ``sqrt(band width)`` when the
    amplitudes are band-averaged variables.
    """
    i = E.omega_index(omega)
    f = _pad_amplitudes(amplitudes, E.coefficients.shape[-1])
    return SampledField(
        float(E.omegas[i]),
        weight * (E.coefficients[i] @ f),
        weight * (E.derivative[i] @ f),
        weight * (P_N.coefficients[i] @ f),
    )


@dataclass(frozen=True)
class SlowVariableSet:
    """Band-averaged variables ``f~(x, W) = sum_band sqrt(dw / dW) a(x, w)``.

    ``a = sqrt(dw) f`` are unit-normalised lattice amplitudes; with
    ``dW = n * dw`` the averaging vector has unit norm, so
    ``[f~, f~^+] = delta / w_x`` band by band.
    """

    indices: dict
    carriers: dict
    widths: dict
    domega: float

    def weights(self, name: str) -> np.ndarray:
        n = self.indices[name].size
        return np.full(n, np.sqrt(self.domega / self.widths[name]))

    def average(self, name: str, amplitudes: np.ndarray) -> np.ndarray:
        """Band average of unit-normalised amplitudes shaped ``(n_omega, n_x)``."""
        a = np.asarray(amplitudes)[self.indices[name]]
        return self.weights(name) @ a

    def band_of(self, carrier: float, tol: float | None = None) -> str:
        best = min(self.carriers, key=lambda k: abs(self.carriers[k] - carrier))
        limit = 0.5 * self.widths[best] if tol is None else tol
        if abs(self.carriers[best] - carrier) > limit:
            raise KeyError(f"no band around {carrier:g}")
        return best


def reduce_to_bands(lattice: ModeLattice, bands: dict) -> SlowVariableSet:
    """Group lattice frequencies into named bands ``{name: (carrier, width)}``.

    The effective band width is the number of grid points times the spacing.
    """
    freq = lattice.frequencies
    dw = freq.spacing
    lo, hi = freq.points[0] - 0.5 * dw, freq.points[-1] + 0.5 * dw
    indices, carriers, widths = {}, {}, {}
    taken = {}
    for name, (carrier, width) in bands.items():
        if carrier - 0.5 * width < lo - 1e-9 * dw or carrier + 0.5 * width > hi + 1e-9 * dw:
            raise ValueError(f"band {name!r} is not inside the frequency grid")
        idx = freq.band(carrier, width)
        if idx.size == 0:
            raise ValueError(f"band {name!r} contains no grid points")
        for i in idx:
            if int(i) in taken:
                raise OverlappingBands(f"bands {taken[int(i)]!r} and {name!r} overlap")
            taken[int(i)] = name
        indices[name] = idx
        carriers[name] = float(carrier)
        widths[name] = idx.size * dw
    return SlowVariableSet(indices, carriers, widths, dw)


def random_smooth_amplitudes(grid: SpatialGrid1D, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Random complex profile ``sum_m c_m sin(m pi x / X) / m``.

    Resolution independent and zero at both ends, so grid ladders refine one
    and the same continuum amplitude.
    """
    c = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
    m = np.arange(1, modes + 1)
    x = grid.points / grid.domain
    return (np.sin(np.pi * np.outer(x, m)) * (c / m)).sum(axis=1)
