"""Run configuration and deterministic artifact I/O.

Config files are JSON. All numbers are in natural units (hbar = eps0 = c = 1)
with one reference length ``L0`` (``units.length``, documentation only):
positions are in ``L0``, frequencies in ``c / L0``.

CSV files use ``%.17g`` numbers, ``.`` as decimal separator and LF line
endings; JSON is written with sorted keys. Identical inputs therefore give
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .greens import Geometry1D, GreenField, Layer, SpatialGrid1D
from .materials import FrequencyGrid, Material, material_from_dict

UNITS_NOTE = "natural units hbar = eps0 = c = 1; positions in L0, frequencies in c/L0"

DEFAULT_TOLERANCES = {
    "kk": 1e-2,
    "helmholtz": 5e-2,
    "identity": 1e-3,
    "reciprocity": 1e-10,
    "fredholm": 5e-2,
    "oracle": 5e-2,
    "noise": 5e-2,
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; only sections a subcommand needs are required."""

    raw: dict = field(repr=False)
    base_dir: Path
    seed: int
    materials: dict
    tolerances: dict
    output: Path | None

    # --- sections --------------------------------------------------------

    def section(self, name: str) -> dict:
        value = self.raw.get(name)
        if not isinstance(value, dict):
            raise ConfigError(f"config needs a {name!r} object")
        return value

    def material(self, ref) -> Material:
        if isinstance(ref, dict):
            return material_from_dict(ref, "<inline>", self.base_dir)
        if ref not in self.materials:
            raise ConfigError(f"unknown material {ref!r}")
        return self.materials[ref]

    def geometry(self) -> Geometry1D:
        doc = self.section("geometry")
        try:
            domain = float(doc["domain"])
            layers = tuple(
                Layer(float(item["from"]), float(item["to"]), self.material(item["material"]))
                for item in doc["layers"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad geometry: {exc}") from exc
        return Geometry1D(domain, layers)

    def grid(self, refine_level: int = 0) -> SpatialGrid1D:
        doc = self.section("grid")
        geom = self.geometry()
        try:
            grid = SpatialGrid1D(geom.domain, int(doc["intervals"]) * 2**refine_level)
            geom.check_grid(grid)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid: {exc}") from exc
        return grid

    def omegas(self) -> list[float]:
        values = self.raw.get("omegas")
        if not values:
            raise ConfigError("config needs a non-empty 'omegas' list")
        return [_positive(w, "omega") for w in values]

    def carriers(self) -> tuple[float, float]:
        doc = self.section("carriers")
        try:
            return _positive(doc["signal"], "signal"), _positive(doc["idler"], "idler")
        except KeyError as exc:
            raise ConfigError(f"carriers need {exc}") from exc

    def frequency_grid(self) -> FrequencyGrid:
        doc = self.section("frequency_grid")
        try:
            return FrequencyGrid.uniform(float(doc["start"]), float(doc["stop"]), int(doc["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad frequency_grid: {exc}") from exc

    def bands(self) -> dict:
        doc = self.section("bands")
        try:
            return {name: (float(b["carrier"]), float(b["width"])) for name, b in sorted(doc.items())}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad bands: {exc}") from exc


def _positive(value, what: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a number") from exc
    if not v > 0:
        raise ConfigError(f"{what} must be positive")
    return v


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises :class:`ConfigError` for missing files, malformed JSON, unknown
    material references and geometry/grid inconsistencies.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    base_dir = path.parent
    materials = {}
    for name, doc in sorted(raw.get("materials", {}).items()):
        try:
            materials[name] = material_from_dict(doc, name, base_dir)
        except ConfigError:
            raise
        except (OSError, ValueError) as exc:
            raise ConfigError(f"material {name!r}: {exc}") from exc
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update({k: float(v) for k, v in raw.get("tolerances", {}).items()})
    try:
        seed = int(raw.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an integer") from exc
    output = Path(raw["output"]) if "output" in raw else None
    config = RunConfig(raw, base_dir, seed, materials, tolerances, output)
    # resolve everything present now so that bad references fail at load time
    if "geometry" in raw:
        config.geometry()
        if "grid" in raw:
            config.grid()
    return config


# --- writers -------------------------------------------------------------


def _fmt(value) -> str:
    return "%.17g" % value


def write_csv(path, header, rows) -> None:
    """Write rows of numbers (``%.17g``) or strings with LF line endings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path, data) -> None:
    text = json.dumps(_plain(data), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n", newline="\n")


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    return value


def write_green_csv(path, green: GreenField, grid: SpatialGrid1D) -> None:
    """Rows ``x, x', Re g, Im g`` over all node pairs."""
    x = grid.points
    xx, ss = np.meshgrid(x, x, indexing="ij")
    g = green.values
    write_csv(path, ["x", "x_prime", "re", "im"],
              zip(xx.ravel(), ss.ravel(), g.real.ravel(), g.imag.ravel()))


def write_alpha_csv(path, alpha) -> None:
    """Rows ``x1, x2, x3, Re alpha, Im alpha``."""
    x = alpha.grid.points
    n1, n2, n3 = alpha.values.shape
    i1, i2, i3 = np.meshgrid(np.arange(n1), alpha.index2, alpha.index3, indexing="ij")
    v = alpha.values
    write_csv(path, ["x1", "x2", "x3", "re", "im"],
              zip(x[i1.ravel()], x[i2.ravel()], x[i3.ravel()], v.real.ravel(), v.imag.ravel()))


# Binary coupling-tensor layout (all little-endian):
#   4 bytes   magic b"NLQA"
#   u32       format version (1)
#   3 x u64   dims (n1, n2, n3)
#   3 x f64   carriers (W23, W2, W3)
#   f64       grid spacing h
#   u64       parameter stride (index step of the x2/x3 nodes; 1 = full grid)
#   u64       offset of the first parameter node
#   n1*n2*n3 x (f64 re, f64 im), row-major over (x1, x2, x3)
ALPHA_MAGIC = b"NLQA"
ALPHA_VERSION = 1
_ALPHA_HEADER = struct.Struct("<4sI3Q3ddQQ")


def write_alpha_binary(path, alpha) -> None:
    idx = np.asarray(alpha.index2)
    if not np.array_equal(idx, alpha.index3):
        raise ValueError("binary layout needs identical x2/x3 node sets")
    stride = int(idx[1] - idx[0]) if idx.size > 1 else 1
    if not np.array_equal(idx, idx[0] + stride * np.arange(idx.size)):
        raise ValueError("binary layout needs evenly spaced parameter nodes")
    header = _ALPHA_HEADER.pack(
        ALPHA_MAGIC, ALPHA_VERSION, *alpha.values.shape, *alpha.carriers, alpha.grid.h, stride, int(idx[0])
    )
    body = np.ascontiguousarray(alpha.values, dtype="<c16").tobytes()
    Path(path).write_bytes(header + body)


def read_alpha_binary(path) -> dict:
    """Inverse of :func:`write_alpha_binary`; returns header fields and values."""
    data = Path(path).read_bytes()
    magic, version, n1, n2, n3, w23, w2, w3, h, stride, offset = _ALPHA_HEADER.unpack_from(data)
    if magic != ALPHA_MAGIC or version != ALPHA_VERSION:
        raise ValueError(f"{path}: not a version-{ALPHA_VERSION} coupling-tensor file")
    values = np.frombuffer(data, dtype="<c16", offset=_ALPHA_HEADER.size).reshape(n1, n2, n3)
    return {
        "carriers": (w23, w2, w3),
        "spacing": h,
        "index": offset + stride * np.arange(n2),
        "values": values.copy(),
    }
