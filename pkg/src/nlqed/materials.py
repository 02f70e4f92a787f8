"""Linear permittivity and second-order susceptibility models.

Units are natural: hbar = eps0 = c = 1, lengths in units of a reference
length L0 and angular frequencies in units of c/L0.

Permittivity models share a tiny duck-typed interface: ``model(omega)``
returns complex eps on an array of real frequencies and ``model.background``
is the high-frequency limit used as the Kramers-Kronig baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridTooNarrow, KramersKronigViolation


@dataclass(frozen=True)
class Oscillator:
    wp2: float
    w0: float
    gamma: float


@dataclass(frozen=True)
class PermittivityModel:
    """Lorentz-oscillator sum ``background + sum wp2 / (w0^2 - w^2 - i gamma w)``."""

    background: float = 1.0
    oscillators: tuple[Oscillator, ...] = ()

    def __post_init__(self):
        if self.background < 1.0:
            raise ValueError("background permittivity must be >= 1")
        object.__setattr__(self, "oscillators", tuple(self.oscillators))

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        eps = np.full(w.shape, complex(self.background))
        for osc in self.oscillators:
            eps = eps + osc.wp2 / (osc.w0**2 - w**2 - 1j * osc.gamma * w)
        return eps if eps.ndim else complex(eps)

    def span_requirement(self) -> float:
        """Smallest admissible upper frequency of a Kramers-Kronig grid."""
        if not self.oscillators:
            return 0.0
        return 20.0 * max(max(o.w0, o.gamma) for o in self.oscillators)


@dataclass(frozen=True)
class ConstantPermittivity:
    """Frequency-independent complex eps.

    Not causal unless the imaginary part is zero; useful as a synthetic
    non-dispersive medium and as a Kramers-Kronig counterexample.
    """

    value: complex

    @property
    def background(self) -> float:
        return float(np.real(self.value))

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        eps = np.full(w.shape, complex(self.value))
        return eps if eps.ndim else complex(eps)

    def span_requirement(self) -> float:
        return 0.0


@dataclass(frozen=True)
class TabulatedPermittivity:
    """Sampled eps(omega) with linear interpolation of real and imaginary parts."""

    omega: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1 or w.size < 2 or np.any(np.diff(w) <= 0):
            raise ValueError("tabulated frequencies must be strictly increasing")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=complex))

    @property
    def background(self) -> float:
        return float(self.eps[-1].real)

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.interp(w, self.omega, self.eps.real) + 1j * np.interp(
            w, self.omega, self.eps.imag
        )
        return out if out.ndim else complex(out)

    def span_requirement(self) -> float:
        return 0.0


@dataclass(frozen=True)
class LossScaled:
    """Wraps a model and multiplies Im eps by ``factor``.

    With ``only_at`` given, the scaling applies only at those frequencies
    (matched with a relative tolerance of 1e-12); elsewhere the base model is
    returned unchanged. Used for loss-scaling scans.
    """

    base: object
    factor: float
    only_at: tuple[float, ...] | None = None

    @property
    def background(self) -> float:
        return self.base.background

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        eps = np.asarray(self.base(w), dtype=complex)
        scaled = eps.real + 1j * self.factor * eps.imag
        if self.only_at is not None:
            hit = np.zeros(w.shape, dtype=bool)
            for target in self.only_at:
                hit |= np.isclose(w, target, rtol=1e-12, atol=0.0)
            scaled = np.where(hit, scaled, eps)
        return scaled if scaled.ndim else complex(scaled)

    def span_requirement(self) -> float:
        return self.base.span_requirement()


def eval_permittivity(model, omega):
    """Complex permittivity of ``model`` at real frequency ``omega``."""
    return model(omega)


@dataclass(frozen=True)
class FrequencyGrid:
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.points, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("frequency grid needs at least two points")
        steps = np.diff(w)
        if np.any(steps <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("frequency grid points must be positive")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("frequency grid must be uniform")
        object.__setattr__(self, "points", w)

    @classmethod
    def uniform(cls, start: float, stop: float, num: int) -> "FrequencyGrid":
        return cls(np.linspace(start, stop, num))

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    def __len__(self):
        return self.points.size

    def band(self, carrier: float, width: float) -> np.ndarray:
        """Indices of the points within ``width / 2`` of ``carrier``."""
        tol = 1e-9 * self.spacing
        idx = np.flatnonzero(np.abs(self.points - carrier) <= 0.5 * width + tol)
        return idx

    def index_of(self, omega: float) -> int:
        i = int(np.argmin(np.abs(self.points - omega)))
        if not np.isclose(self.points[i], omega, rtol=1e-9, atol=1e-12):
            raise KeyError(f"frequency {omega} is not a grid point")
        return i


@dataclass(frozen=True)
class KKReport:
    max_rel_error: float
    passed: bool
    omega: np.ndarray = field(repr=False)
    reconstructed: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)


def _kk_reconstruct(points, eps_imag, eps_imag_zero, targets):
    """Principal-value reconstruction of Re eps - background at ``points[targets]``.

    Uses ``Re eps(w) - b = (2/pi) P int_0^inf w' eps''(w') / (w'^2 - w^2) dw'``
    truncated at the last grid point. The singular point is handled by
    subtracting ``w eps''(w)`` from the numerator; the subtracted piece is
    integrated analytically and the regularised integrand (whose value at
    ``w' = w`` is ``(w' eps'')'/(2w)``) by the trapezoid rule.
    """
    if points[0] > 0:
        nodes = np.concatenate(([0.0], points))
        y = nodes * np.concatenate(([eps_imag_zero], eps_imag))
    else:
        nodes, y = points, points * eps_imag
    dy = np.gradient(y, nodes, edge_order=2)
    weights = np.empty_like(nodes)
    steps = np.diff(nodes)
    weights[0] = 0.5 * steps[0]
    weights[-1] = 0.5 * steps[-1]
    weights[1:-1] = 0.5 * (steps[:-1] + steps[1:])
    offset = nodes.size - points.size
    top = nodes[-1]

    out = np.empty(targets.size)
    chunk = 256
    for start in range(0, targets.size, chunk):
        rows = targets[start : start + chunk] + offset
        w = nodes[rows][:, None]
        denom = nodes[None, :] ** 2 - w**2
        num = y[None, :] - y[rows][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = num / denom
        f[np.arange(rows.size), rows] = dy[rows] / (2.0 * nodes[rows])
        regular = f @ weights
        w1 = w[:, 0]
        singular = y[rows] / (2.0 * w1) * np.log(np.abs((top - w1) / (top + w1)))
        out[start : start + chunk] = 2.0 / np.pi * (regular + singular)
    return out


def check_kramers_kronig(model, grid: FrequencyGrid, tol: float = 1e-2) -> KKReport:
    """Compare Re eps with its Kramers-Kronig reconstruction from Im eps.

    The error is reported on the grid points below 80% of the span (the top
    fifth is dominated by truncation of the integral; the bottom needs no
    margin because Im eps is extended to omega = 0), normalised by the peak
    of ``|eps - background|`` over the whole grid. Raises :class:`GridTooNarrow` when
    the grid does not reach 20x the largest resonance frequency or width.
    """
    points = grid.points if isinstance(grid, FrequencyGrid) else np.asarray(grid, float)
    need = model.span_requirement()
    if points[-1] < need:
        raise GridTooNarrow(
            f"grid ends at {points[-1]:g} but must reach {need:g} "
            "(20x the largest resonance frequency/width)"
        )
    n = points.size
    targets = np.flatnonzero(points <= 0.8 * points[-1])
    eps = np.asarray(model(points), dtype=complex)
    if isinstance(model, TabulatedPermittivity):
        # odd extension of Im eps: no data below the table, assume Im eps(0) = 0
        imag_zero = 0.0
    else:
        imag_zero = float(np.imag(model(0.0)))
    recon = _kk_reconstruct(points, eps.imag, imag_zero, targets)
    ref = eps.real[targets] - model.background
    scale = float(np.max(np.abs(eps - model.background)))
    err = float(np.max(np.abs(recon - ref)))
    if scale == 0.0:
        rel = 0.0 if err == 0.0 else np.inf
    else:
        rel = err / scale
    return KKReport(rel, bool(rel < tol), points[targets], recon, ref)


@dataclass(frozen=True)
class Chi2Model:
    """Scalar second-order susceptibility.

    ``kind`` is ``"zero"``, ``"constant"`` (value ``amplitude``) or
    ``"miller"``: ``delta * (eps(w1+w2)-1)(eps(w1)-1)(eps(w2)-1)``.
    """

    kind: str = "zero"
    amplitude: complex = 0.0
    permittivity: object = None
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "miller"):
            raise ValueError(f"unknown chi2 kind {self.kind!r}")
        if self.kind == "miller" and self.permittivity is None:
            raise ValueError("miller chi2 needs a reference permittivity")

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "constant":
            return self.amplitude == 0
        return self.delta == 0

    def __call__(self, w1, w2):
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        shape = np.broadcast(w1, w2).shape
        if self.kind == "zero":
            out = np.zeros(shape, dtype=complex)
        elif self.kind == "constant":
            out = np.full(shape, complex(self.amplitude))
        else:
            eps = self.permittivity
            # the pair product is commutative in IEEE arithmetic, so swapping
            # the arguments reproduces the value bit for bit
            pair = (eps(w1) - 1.0) * (eps(w2) - 1.0)
            out = self.delta * (eps(w1 + w2) - 1.0) * pair
            out = np.broadcast_to(np.asarray(out, dtype=complex), shape).copy()
        return out if out.ndim else complex(out)


def eval_chi2(model: Chi2Model, w1, w2):
    return model(w1, w2)


@dataclass(frozen=True)
class Material:
    permittivity: object
    chi2: Chi2Model = Chi2Model()
    name: str = ""


def read_permittivity_csv(path) -> TabulatedPermittivity:
    """Load ``omega, Re eps, Im eps`` rows; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                if rows:
                    raise
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ConfigError(f"{path}: expected three columns (omega, Re eps, Im eps)")
    return TabulatedPermittivity(data[:, 0], data[:, 1] + 1j * data[:, 2])


def permittivity_from_dict(doc: dict, base_dir=None, kk_tol: float = 1e-2):
    if "table" in doc:
        path = Path(doc["table"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        model = read_permittivity_csv(path)
        report = check_kramers_kronig(model, model.omega, tol=kk_tol)
        if not report.passed:
            raise KramersKronigViolation(
                f"{path}: tabulated permittivity fails the Kramers-Kronig check "
                f"(error {report.max_rel_error:.3g})"
            )
        return model
    if "epsilon" in doc:
        re, im = doc["epsilon"]
        return ConstantPermittivity(complex(re, im))
    try:
        oscillators = tuple(
            Oscillator(float(o["wp2"]), float(o["w0"]), float(o["gamma"]))
            for o in doc.get("oscillators", ())
        )
        return PermittivityModel(float(doc.get("background", 1.0)), oscillators)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad permittivity definition: {exc}") from exc


def chi2_from_dict(doc: dict | None, permittivity) -> Chi2Model:
    if not doc:
        return Chi2Model()
    kind = doc.get("kind", "zero")
    amp = doc.get("amplitude", 0.0)
    if isinstance(amp, (list, tuple)):
        amp = complex(*amp)
    if kind == "miller":
        ref = doc.get("reference")
        ref_model = permittivity_from_dict(ref) if ref else permittivity
        return Chi2Model("miller", permittivity=ref_model, delta=float(doc.get("delta", 1.0)))
    try:
        return Chi2Model(kind, amplitude=complex(amp))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def material_from_dict(doc: dict, name: str = "", base_dir=None) -> Material:
    """Build a :class:`Material` from the JSON material document."""
    if not isinstance(doc, dict):
        raise ConfigError(f"material {name!r} must be a JSON object")
    eps = permittivity_from_dict(doc, base_dir)
    return Material(eps, chi2_from_dict(doc.get("chi2"), eps), name)
