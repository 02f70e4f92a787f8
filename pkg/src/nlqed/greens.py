"""Green functions of the Helmholtz equation and the discrete Helmholtz operator.

The workhorse is the 1D scalar reduction

    [-d^2/dx^2 - w^2 eps(x, w)] g(x, x', w) = delta(x - x')

on a stratified medium whose first and last layers extend to -inf and
+inf. The computational window [0, X] is sampled on a uniform grid whose
nodes include every interface. The homogeneous 3D dyadic is kept as an
analytic cross-check.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoincidentPoints,
    ConfigError,
    DegenerateWronskian,
    GridTooCoarse,
    NonAbsorbing,
)
from .materials import Material

# h*|k| above this makes the 3-point stencil too dispersive for our tolerances
MAX_STENCIL_HK = 0.3


@dataclass(frozen=True)
class SpatialGrid1D:
    """Uniform grid of ``intervals + 1`` nodes over [0, domain]."""

    domain: float
    intervals: int

    def __post_init__(self):
        if self.domain <= 0:
            raise ValueError("domain length must be positive")
        if self.intervals + 1 < 32:
            raise ValueError("spatial grid needs at least 32 points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.domain, self.intervals + 1)

    @property
    def h(self) -> float:
        return self.domain / self.intervals

    @property
    def size(self) -> int:
        return self.intervals + 1

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights."""
        w = np.full(self.size, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def index_of(self, x: float) -> int:
        i = int(round(x / self.h))
        if abs(i * self.h - x) > 1e-9 * max(self.domain, 1.0):
            raise ValueError(f"position {x} is not a grid node")
        return i


@dataclass(frozen=True)
class Layer:
    start: float
    stop: float
    material: Material


@dataclass(frozen=True)
class Geometry1D:
    """Stack of layers tiling [0, domain]; the outer two are semi-infinite."""

    domain: float
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ConfigError("geometry needs at least one layer")
        tol = 1e-12 * max(self.domain, 1.0)
        if abs(layers[0].start) > tol or abs(layers[-1].stop - self.domain) > tol:
            raise ConfigError("layers must start at 0 and end at the domain length")
        for a, b in zip(layers, layers[1:]):
            if abs(a.stop - b.start) > tol:
                raise ConfigError("layers must be contiguous")
        for layer in layers:
            if layer.stop <= layer.start:
                raise ConfigError("layer boundaries must be strictly increasing")

    @classmethod
    def homogeneous(cls, material: Material, domain: float) -> "Geometry1D":
        return cls(domain, (Layer(0.0, domain, material),))

    @property
    def interfaces(self) -> np.ndarray:
        return np.array([layer.stop for layer in self.layers[:-1]])

    def layer_index(self, x) -> np.ndarray:
        """Owning layer of each position; an interface belongs to the layer on its right."""
        x = np.asarray(x, dtype=float)
        return np.searchsorted(self.interfaces, x, side="right")

    def check_grid(self, grid: SpatialGrid1D) -> None:
        if abs(grid.domain - self.domain) > 1e-12 * self.domain:
            raise ConfigError("grid and geometry domains differ")
        for x in self.interfaces:
            grid.index_of(x)

    def eps_layers(self, omega: float) -> np.ndarray:
        return np.array([complex(layer.material.permittivity(omega)) for layer in self.layers])

    def _node_values(self, grid: SpatialGrid1D, per_layer: np.ndarray) -> np.ndarray:
        # interface nodes take the mean of both neighbours (trapezoid-consistent)
        x = grid.points
        vals = per_layer[self.layer_index(x)].astype(complex)
        for j, xb in enumerate(self.interfaces):
            i = grid.index_of(xb)
            vals[i] = 0.5 * (per_layer[j] + per_layer[j + 1])
        return vals

    def eps_nodes(self, grid: SpatialGrid1D, omega: float) -> np.ndarray:
        return self._node_values(grid, self.eps_layers(omega))

    def chi2_nodes(self, grid: SpatialGrid1D, w1: float, w2: float) -> np.ndarray:
        per_layer = np.array([complex(layer.material.chi2(w1, w2)) for layer in self.layers])
        return self._node_values(grid, per_layer)

    def chi2_is_zero(self) -> bool:
        return all(layer.material.chi2.is_zero for layer in self.layers)


def wavenumbers(eps: np.ndarray, omega: float) -> np.ndarray:
    """``omega * sqrt(eps)`` on the branch with Im k >= 0."""
    k = omega * np.sqrt(np.asarray(eps, dtype=complex))
    return np.where(k.imag < 0, -k, k)


@dataclass(frozen=True)
class GreenField:
    omega: float
    grid: SpatialGrid1D
    values: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)
    terminal_k: tuple[complex, complex] = (0j, 0j)

    @property
    def edge_columns(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values[:, 0], self.values[:, -1]


def _fundamental_solutions(geom: Geometry1D, omega: float, x: np.ndarray):
    eps = geom.eps_layers(omega)
    k = wavenumbers(eps, omega)
    starts = np.array([layer.start for layer in geom.layers])
    stops = np.array([layer.stop for layer in geom.layers])
    n = len(geom.layers)

    # coefficients of A e^{ik(x-a)} + B e^{-ik(x-a)} with a the layer start
    left = np.zeros((n, 2), dtype=complex)
    left[0] = (0.0, 1.0)
    for j in range(n - 1):
        d = stops[j] - starts[j]
        a, b = left[j]
        u = a * np.exp(1j * k[j] * d) + b * np.exp(-1j * k[j] * d)
        du = 1j * k[j] * (a * np.exp(1j * k[j] * d) - b * np.exp(-1j * k[j] * d))
        q = du / (1j * k[j + 1])
        left[j + 1] = (0.5 * (u + q), 0.5 * (u - q))

    right = np.zeros((n, 2), dtype=complex)
    right[-1] = (1.0, 0.0)
    for j in range(n - 1, 0, -1):
        a, b = right[j]
        u = a + b
        du = 1j * k[j] * (a - b)
        d = stops[j - 1] - starts[j - 1]
        q = du / (1j * k[j - 1])
        right[j - 1] = (
            0.5 * (u + q) * np.exp(-1j * k[j - 1] * d),
            0.5 * (u - q) * np.exp(1j * k[j - 1] * d),
        )

    idx = geom.layer_index(x)
    kk = k[idx]
    t = x - starts[idx]
    ep = np.exp(1j * kk * t)
    em = np.exp(-1j * kk * t)

    def evaluate(coef):
        a, b = coef[idx, 0], coef[idx, 1]
        return a * ep + b * em, 1j * kk * (a * ep - b * em)

    uL, duL = evaluate(left)
    uR, duR = evaluate(right)
    return uL, duL, uR, duR, k


def green_1d(geom: Geometry1D, omega: float, grid: SpatialGrid1D) -> GreenField:
    """Outgoing Green function of the stratified medium sampled on ``grid``.

    Built as ``g(x, x') = -u_L(x_<) u_R(x_>) / W`` from the fundamental
    solutions outgoing to the left and right (layer transfer matrices) and
    their Wronskian ``W = u_L u_R' - u_L' u_R``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    eps = geom.eps_layers(omega)
    if np.any(eps.imag < 0):
        raise ValueError("green_1d needs passive layers (Im eps >= 0)")
    geom.check_grid(grid)
    x = grid.points
    uL, duL, uR, duR, k = _fundamental_solutions(geom, omega, x)

    wr = uL * duR - duL * uR
    scale = np.abs(uL * duR) + np.abs(duL * uR)
    if np.any(np.abs(wr) < 1e-10 * scale):
        raise DegenerateWronskian(
            f"fundamental solutions are linearly dependent at omega={omega:g}; "
            "the structure supports a lossless resonance, add absorption"
        )
    W = wr[np.argmax(np.abs(wr) / scale)]

    i = np.arange(x.size)
    lower = i[:, None] <= i[None, :]
    g = np.where(lower, np.outer(uL, uR), np.outer(uR, uL)) / -W
    dg_below = np.outer(duL, uR) / -W  # x < x'
    dg_above = np.outer(duR, uL) / -W  # x > x'
    dg = np.where(i[:, None] < i[None, :], dg_below, dg_above)
    np.fill_diagonal(dg, 0.5 * (np.diag(dg_below) + np.diag(dg_above)))
    return GreenField(omega, grid, g, dg, (complex(k[0]), complex(k[-1])))


def check_stencil_resolution(geom: Geometry1D, omega: float, grid: SpatialGrid1D) -> None:
    k = np.abs(wavenumbers(geom.eps_layers(omega), omega))
    worst = float(grid.h * k.max())
    if worst > MAX_STENCIL_HK:
        raise GridTooCoarse(
            f"h*|k| = {worst:.3g} exceeds {MAX_STENCIL_HK} at omega={omega:g}; refine the grid"
        )


def apply_helmholtz(field_values, geom: Geometry1D, omega: float, grid: SpatialGrid1D):
    """``(-D2 - w^2 eps) field`` on interior nodes (axis 0 is space).

    The two boundary nodes are dropped, so the result has ``grid.size - 2``
    rows.
    """
    check_stencil_resolution(geom, omega, grid)
    f = np.asarray(field_values)
    if f.shape[0] != grid.size:
        raise ValueError("field must be sampled on the full grid")
    eps = geom.eps_nodes(grid, omega)[1:-1]
    eps = eps.reshape((-1,) + (1,) * (f.ndim - 1))
    d2 = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / grid.h**2
    return -d2 - omega**2 * eps * f[1:-1]


def helmholtz_residual(geom: Geometry1D, omega: float, grid: SpatialGrid1D, green=None) -> float:
    """Relative L2 distance between ``apply_helmholtz(g)`` and the discrete delta."""
    g = green if green is not None else green_1d(geom, omega, grid)
    hg = apply_helmholtz(g.values, geom, omega, grid)
    delta = np.eye(grid.size)[1:-1] / grid.h
    return float(np.linalg.norm(hg - delta) / np.linalg.norm(delta))


def reciprocity_defect(green: GreenField) -> float:
    g = green.values
    return float(np.max(np.abs(g - g.T)) / np.max(np.abs(g)))


def green_identity_terms(geom: Geometry1D, omega: float, grid: SpatialGrid1D, green=None):
    """Both sides of ``w^2 int eps'' g(x,s) g*(x',s) ds = Im g(x,x')``.

    The integral runs over the whole line: trapezoid rule inside the window
    plus the exact contribution of the semi-infinite terminal layers, which
    is ``Re k_edge * g(x, edge) g*(x', edge)`` (the lossless limit of the
    tail integral, i.e. the radiated part when the terminal layer is
    transparent).
    """
    g = green if green is not None else green_1d(geom, omega, grid)
    eps2 = geom.eps_nodes(grid, omega).imag
    wts = grid.weights * eps2 * omega**2
    lhs = (g.values * wts) @ g.values.conj().T
    k_left, k_right = g.terminal_k
    g0, gx = g.edge_columns
    lhs = lhs + k_left.real * np.outer(g0, g0.conj()) + k_right.real * np.outer(gx, gx.conj())
    return lhs, g.values.imag


def verify_green_identity(geom: Geometry1D, omega: float, grid: SpatialGrid1D, green=None) -> float:
    """Max deviation of the fluctuation identity, relative to ``max |Im g|``."""
    eps2 = geom.eps_nodes(grid, omega).imag
    if not np.any(eps2 > 0):
        raise NonAbsorbing(f"Im eps vanishes everywhere at omega={omega:g}")
    lhs, rhs = green_identity_terms(geom, omega, grid, green)
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))


def worker_count() -> int:
    env = os.environ.get("NLQED_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def green_fields(geom: Geometry1D, omegas, grid: SpatialGrid1D) -> dict[float, GreenField]:
    """Green functions at several frequencies; evaluated concurrently, merged in order."""
    omegas = [float(w) for w in omegas]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        fields = list(pool.map(lambda w: green_1d(geom, w, grid), omegas))
    return dict(zip(omegas, fields))


def green_homogeneous_3d(eps: complex, omega: float, r, s) -> np.ndarray:
    """Dyadic ``(I + k^-2 grad grad) e^{ikR} / (4 pi R)`` of a homogeneous medium."""
    if np.imag(eps) < 0:
        raise ValueError("Im eps must be non-negative")
    d = np.asarray(r, dtype=float) - np.asarray(s, dtype=float)
    R = float(np.linalg.norm(d))
    if R < 1e-9:
        raise CoincidentPoints("the dyadic Green function is singular at r = s")
    k = complex(wavenumbers(np.array([eps]), omega)[0])
    u = d / R
    kr = k * R
    scalar = np.exp(1j * kr) / (4.0 * np.pi * R)
    a = 1.0 + 1j / kr - 1.0 / kr**2
    b = -1.0 - 3j / kr + 3.0 / kr**2
    return scalar * (a * np.eye(3) + b * np.outer(u, u))
