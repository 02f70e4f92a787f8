"""First-order parametric down-conversion from the band-reduced Hamiltonian.

A classical pump ``beta phi(x1) e^{-i W_p t}`` drives the W23 band. To first
order in the interaction, the photon-pair part of the state over an
interaction window ``[-T/2, T/2]`` is

    |psi> = sum psi[(x2, m2), (x3, m3)] b^+_{x2,m2} b^+_{x3,m3} |0>

where ``b = sqrt(w) f~`` are unit-commutator spatial modes and each band is
split into ``M`` sub-bins ``m`` to resolve energy selection:

    psi = -i beta T sinc(Delta T / 2) S(x2, x3) / (M sqrt(w2 w3)),
    S(x2, x3) = sum_x1 conj(C[x1, x2, x3]) phi(x1),
    Delta = W_p - W2(m2) - W3(m3).

The centred window makes the time integral real.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coupling import EffectiveHamiltonian
from .errors import PerturbationInvalid, ZeroAmplitude
from .greens import SpatialGrid1D

WEAK_STRENGTH = 0.1
MAX_STRENGTH = 1.0


@dataclass(frozen=True)
class PumpSpec:
    """Classical pump: carrier, complex amplitude and trapezoid-normalised profile."""

    carrier: float
    beta: complex
    profile: np.ndarray = field(repr=False)
    grid: SpatialGrid1D = field(repr=False)

    def __post_init__(self):
        norm = float(np.sum(self.grid.weights * np.abs(self.profile) ** 2))
        if not np.isclose(norm, 1.0, rtol=1e-10, atol=0.0):
            raise ValueError(f"pump profile must be normalised (got {norm:.6g})")

    @classmethod
    def gaussian(cls, grid: SpatialGrid1D, carrier: float, beta: complex, center: float, width: float) -> "PumpSpec":
        raw = np.exp(-0.5 * ((grid.points - center) / width) ** 2).astype(complex)
        return cls(carrier, beta, cls._normalise(grid, raw), grid)

    @classmethod
    def uniform(cls, grid: SpatialGrid1D, carrier: float, beta: complex) -> "PumpSpec":
        return cls(carrier, beta, cls._normalise(grid, np.ones(grid.size, dtype=complex)), grid)

    @staticmethod
    def _normalise(grid, raw):
        return raw / np.sqrt(np.sum(grid.weights * np.abs(raw) ** 2))


@dataclass(frozen=True)
class BiphotonAmplitude:
    """``psi[a, m2, b, m3]``: spatial signal/idler node, then sub-bin."""

    values: np.ndarray = field(repr=False)
    time: float
    subbins: int
    offsets2: np.ndarray = field(repr=False)
    offsets3: np.ndarray = field(repr=False)
    pump_detuning: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        """Joint amplitude with rows ``a * M + m2`` and columns ``b * M + m3``."""
        n2, m, n3, _ = self.values.shape
        return self.values.reshape(n2 * m, n3 * m)

    @property
    def strength(self) -> float:
        return float(np.linalg.norm(self.values))

    def schmidt_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def antidiagonal_profile(self) -> tuple[np.ndarray, np.ndarray]:
        """Sum of ``|psi|`` along lines of constant ``W2 + W3``.

        Returns ``(Delta, profile)`` with ``Delta = W_p - W2 - W3`` ascending.
        """
        mag = np.abs(self.values).sum(axis=(0, 2))
        m = self.subbins
        sums = self.offsets2[:, None] + self.offsets3[None, :]
        keys = np.add.outer(np.arange(m), np.arange(m))
        profile = np.bincount(keys.ravel(), weights=mag.ravel())
        centre = np.bincount(keys.ravel(), weights=sums.ravel()) / np.bincount(keys.ravel())
        delta = self.pump_detuning - centre
        order = np.argsort(delta)
        return delta[order], profile[order]


def subbin_offsets(width: float, subbins: int) -> np.ndarray:
    """Sub-bin centres relative to the band carrier, symmetric about zero."""
    return (np.arange(subbins) + 0.5 - 0.5 * subbins) * width / subbins


def biphoton_first_order(H: EffectiveHamiltonian, pump: PumpSpec, time: float, subbins: int = 32) -> BiphotonAmplitude:
    """First-order pair amplitude. Warns above strength 0.1, raises above 1."""
    w23, w2, w3 = H.carriers
    if abs(pump.carrier - w23) > 0.5 * H.widths[0]:
        raise ValueError(f"pump carrier {pump.carrier:g} lies outside the {w23:g} band")
    if time <= 0 or subbins < 1:
        raise ValueError("interaction time and sub-bin count must be positive")
    if pump.profile.shape != H.weights1.shape:
        raise ValueError("pump profile and Hamiltonian live on different grids")
    overlap = np.einsum("xab,x->ab", H.annihilation.conj(), pump.profile)
    overlap /= np.sqrt(H.weights2[:, None] * H.weights3[None, :])

    off2 = subbin_offsets(H.widths[1], subbins)
    off3 = subbin_offsets(H.widths[2], subbins)
    base = pump.carrier - w2 - w3
    delta = base - off2[:, None] - off3[None, :]
    window = time * np.sinc(delta * time / (2.0 * np.pi))

    psi = (-1j * pump.beta / subbins) * overlap[:, None, :, None] * window[None, :, None, :]
    result = BiphotonAmplitude(psi, float(time), int(subbins), off2, off3, float(base))
    s = result.strength
    if s > MAX_STRENGTH:
        raise PerturbationInvalid(f"pair amplitude norm {s:.3g} exceeds 1; first-order theory does not apply")
    if s > WEAK_STRENGTH:
        warnings.warn(f"pair amplitude norm {s:.3g} exceeds 0.1; higher orders may matter", RuntimeWarning)
    return result


def heralded_purity(psi) -> float:
    """``sum lambda^4 / (sum lambda^2)^2`` over the Schmidt values of the joint amplitude."""
    matrix = psi.matrix if isinstance(psi, BiphotonAmplitude) else np.asarray(psi)
    s = np.linalg.svd(matrix, compute_uv=False)
    total = np.sum(s**2)
    if total == 0.0:
        raise ZeroAmplitude("joint amplitude is identically zero")
    return float(np.sum(s**4) / total**2)


def fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum around the peak, by linear interpolation."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]

    def crossing(indices):
        prev = i
        for j in indices:
            if y[j] < half:
                return x[prev] + (half - y[prev]) * (x[j] - x[prev]) / (y[j] - y[prev])
            prev = j
        raise ValueError("profile does not fall below half maximum")

    return float(crossing(range(i + 1, x.size)) - crossing(range(i - 1, -1, -1)))
