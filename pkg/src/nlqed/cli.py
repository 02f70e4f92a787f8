"""Command-line front end.

    nlqed <subcommand> --config run.json [--out DIR] [--tol X] [--refine N]

Subcommands: ``material-kk``, ``green-verify``, ``alpha``, ``noise``, ``pdc``.
Exit codes: 0 all checks passed, 1 usage or configuration error, 2 a
scientific check failed or a numerical guard refused the inputs.
``--refine N`` runs a ladder of N grids, doubling the resolution each step.
The environment variable ``NLQED_THREADS`` caps the worker count.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import coupling, greens, pdc, quantization
from .errors import ConfigError, NonAbsorbing, NumericalGuardError, VanishingAbsorption, ZeroAmplitude
from .io import (
    UNITS_NOTE,
    load_config,
    write_alpha_binary,
    write_alpha_csv,
    write_csv,
    write_json,
)
from .materials import FrequencyGrid, check_kramers_kronig

log = logging.getLogger("nlqed")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _status(ok: bool) -> int:
    return EXIT_OK if ok else EXIT_FAILED


def _ladder(args) -> range:
    return range(max(1, args.refine))


def _tol(args, config, key: str) -> float:
    return args.tol if args.tol is not None else config.tolerances[key]


def _orders(values, ratio: float = 2.0) -> list[float]:
    out = []
    for a, b in zip(values, values[1:]):
        out.append(float(np.log(a / b) / np.log(ratio)) if a > 0 and b > 0 else float("nan"))
    return out


# --- material-kk ---------------------------------------------------------


def cmd_material_kk(config, out: Path, args) -> int:
    doc = config.section("kk")
    model = config.material(doc.get("material")).permittivity
    tol = _tol(args, config, "kk")
    g = doc.get("grid", {})
    try:
        start, stop, num = float(g["start"]), float(g["stop"]), int(g["num"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"kk.grid needs start, stop, num: {exc}") from exc
    levels = []
    report = None
    for level in _ladder(args):
        grid = FrequencyGrid.uniform(start, stop, (num - 1) * 2**level + 1)
        report = check_kramers_kronig(model, grid, tol)
        levels.append({"points": len(grid), "max_rel_error": report.max_rel_error})
    write_csv(out / "kk_curve.csv", ["omega", "re_eps_minus_background", "kk_reconstructed"],
              zip(report.omega, report.reference, report.reconstructed))
    write_json(out / "kk_report.json", {
        "material": doc.get("material"),
        "levels": levels,
        "max_rel_error": report.max_rel_error,
        "tolerance": tol,
        "passed": report.passed,
        "units": UNITS_NOTE,
    })
    log.info("KK max relative error %.3g (tol %.3g)", report.max_rel_error, tol)
    return _status(report.passed)


# --- green-verify --------------------------------------------------------


def _green_rows(geom, omega, grid, tols):
    """One row per test: (test, value, tolerance, status)."""
    try:
        green = greens.green_1d(geom, omega, grid)
    except NumericalGuardError as exc:
        return [("green", float("nan"), float("nan"), type(exc).__name__)]
    rows = []
    suites = (
        ("helmholtz", lambda: greens.helmholtz_residual(geom, omega, grid, green), tols["helmholtz"]),
        ("reciprocity", lambda: greens.reciprocity_defect(green), tols["reciprocity"]),
        ("identity", lambda: greens.verify_green_identity(geom, omega, grid, green), tols["identity"]),
    )
    for name, run, tol in suites:
        try:
            value = run()
        except NonAbsorbing:
            rows.append((name, float("nan"), tol, "NonAbsorbing"))
            continue
        except NumericalGuardError as exc:
            rows.append((name, float("nan"), tol, type(exc).__name__))
            continue
        rows.append((name, value, tol, "pass" if value < tol else "fail"))
    return rows


def cmd_green_verify(config, out: Path, args) -> int:
    geom = config.geometry()
    tols = dict(config.tolerances)
    if args.tol is not None:
        tols["helmholtz"] = tols["identity"] = args.tol
    table = []
    for level in _ladder(args):
        grid = config.grid(level)
        for omega in config.omegas():
            for test, value, tol, status in _green_rows(geom, omega, grid, tols):
                table.append((omega, grid.intervals, test, value, tol, status))
    write_csv(out / "green_residuals.csv",
              ["omega", "intervals", "test", "value", "tolerance", "status"],
              [(w, n, t, v, tol, s) for w, n, t, v, tol, s in table])
    # NonAbsorbing marks a check that does not apply, not a failure
    failed = [row for row in table if row[5] not in ("pass", "NonAbsorbing")]
    for row in failed:
        log.warning("omega=%g N=%d %s: %s", row[0], row[1], row[2], row[5])
    return _status(not failed)


# --- alpha ---------------------------------------------------------------


def _alpha_level(config, geom, level, omega2, omega3, count):
    grid = config.grid(level)
    gs = greens.green_fields(geom, sorted({omega2, omega3, omega2 + omega3}), grid)
    idx = coupling.decimated_indices(grid, count)
    alpha = coupling.compute_alpha(None, geom, gs, omega2, omega3, grid, idx, idx)
    return grid, gs, idx, alpha


def cmd_alpha(config, out: Path, args) -> int:
    geom = config.geometry()
    omega2, omega3 = config.carriers()
    count = int(config.raw.get("alpha", {}).get("decimate", 31))
    tol_f = _tol(args, config, "fredholm")
    tol_o = _tol(args, config, "oracle")
    levels = []
    try:
        for level in _ladder(args):
            grid, gs, idx, alpha = _alpha_level(config, geom, level, omega2, omega3, count)
            residual = coupling.fredholm_residual(alpha, None, geom, gs, grid)
            if alpha.empty:
                oracle = 0.0
            else:
                reference = coupling.dense_inversion_alpha(None, geom, gs, omega2, omega3, grid, idx, idx)
                oracle = coupling.oracle_deviation(alpha, reference)
            levels.append({"intervals": grid.intervals, "fredholm_residual": residual, "oracle_deviation": oracle})
            if level == 0:
                write_alpha_binary(out / "alpha.bin", alpha)
                write_alpha_csv(out / "alpha.csv", alpha)
                empty = alpha.empty
    except VanishingAbsorption as exc:
        write_json(out / "alpha_report.json", {
            "error": "VanishingAbsorption",
            "message": str(exc),
            "locations": [{"x": x, "omega23": w} for x, w in exc.locations],
            "passed": False,
        })
        log.error("%s", exc)
        for x, w in exc.locations[:10]:
            log.error("  Im eps < floor at x=%g, omega23=%g", x, w)
        return EXIT_FAILED
    if empty:
        log.warning("chi2 vanishes everywhere: the coupling tensor is identically zero")
    final = levels[-1]
    passed = final["fredholm_residual"] < tol_f and final["oracle_deviation"] < tol_o
    write_json(out / "alpha_report.json", {
        "carriers": {"omega23": omega2 + omega3, "omega2": omega2, "omega3": omega3},
        "parameter_nodes": count,
        "empty": empty,
        "levels": levels,
        "fredholm_order": _orders([lv["fredholm_residual"] for lv in levels]),
        "oracle_order": _orders([lv["oracle_deviation"] for lv in levels]),
        "tolerances": {"fredholm": tol_f, "oracle": tol_o},
        "passed": passed,
        "units": UNITS_NOTE,
    })
    return _status(passed)


# --- noise ---------------------------------------------------------------


def _lattice(geom, grid, omega2, omega3):
    points = sorted({omega2, omega3})
    if len(points) == 1:
        points.append(omega2 + omega3)
    return quantization.ModeLattice(geom, grid, FrequencyGrid(np.array(points)))


def noise_level(config, geom, level, omega2, omega3):
    """Both noise-polarization routes on one grid of the ladder."""
    grid = config.grid(level)
    lattice = _lattice(geom, grid, omega2, omega3)
    gs = greens.green_fields(geom, lattice.omegas, grid)
    E = quantization.assemble_E(lattice, gs)
    P_N = quantization.linear_noise_polarization(lattice)
    # one seeded continuum profile per carrier, resampled on every grid
    rng = np.random.default_rng(config.seed)
    f2 = quantization.random_smooth_amplitudes(grid, rng)
    f3 = quantization.random_smooth_amplitudes(grid, rng)
    alpha = coupling.compute_alpha(None, geom, gs, omega2, omega3, grid)
    via_alpha = coupling.nonlinear_noise_polarization_via_alpha(f2, f3, alpha, lattice)
    e2 = quantization.sample_field(E, P_N, f2, omega2)
    e3 = quantization.sample_field(E, P_N, f3, omega3)
    via_field = coupling.nonlinear_noise_polarization_via_field(e2, e3, None, geom, grid)
    return grid, via_alpha, via_field


def cmd_noise(config, out: Path, args) -> int:
    geom = config.geometry()
    omega2, omega3 = config.carriers()
    tol = _tol(args, config, "noise")
    rows, deviations = [], []
    for level in _ladder(args):
        grid, pa, pf = noise_level(config, geom, level, omega2, omega3)
        dev = coupling.relative_deviation(pf, pa)
        deviations.append(dev)
        peak = np.max(np.abs(pa.values[1:-1]))
        local = np.abs(pf.values - pa.values) / peak if peak > 0 else np.zeros(grid.size)
        for x, a, f, d in zip(grid.points, pa.values, pf.values, local):
            rows.append((grid.intervals, x, a.real, a.imag, f.real, f.imag, d))
    write_csv(out / "noise_comparison.csv",
              ["intervals", "x", "re_via_alpha", "im_via_alpha", "re_via_field", "im_via_field", "rel_dev"],
              rows)
    monotone = all(b < a or a == 0.0 for a, b in zip(deviations, deviations[1:]))
    passed = deviations[-1] < tol and monotone
    write_json(out / "noise_report.json", {
        "carriers": {"omega23": omega2 + omega3, "omega2": omega2, "omega3": omega3},
        "seed": config.seed,
        "intervals": [config.grid(level).intervals for level in _ladder(args)],
        "deviations": deviations,
        "order": _orders(deviations),
        "monotone": monotone,
        "tolerance": tol,
        "passed": passed,
        "units": UNITS_NOTE,
    })
    log.info("two-path deviations %s", ", ".join(f"{d:.3g}" for d in deviations))
    return _status(passed)


# --- pdc -----------------------------------------------------------------


def _pump(config, grid, carrier):
    doc = config.section("pump")
    beta = doc.get("beta", 1.0)
    beta = complex(*beta) if isinstance(beta, (list, tuple)) else complex(beta)
    carrier = float(doc.get("carrier", carrier))
    profile = doc.get("profile", {"kind": "uniform"})
    kind = profile.get("kind", "uniform")
    if kind == "uniform":
        return pdc.PumpSpec.uniform(grid, carrier, beta)
    if kind == "gaussian":
        try:
            return pdc.PumpSpec.gaussian(grid, carrier, beta, float(profile["center"]), float(profile["width"]))
        except KeyError as exc:
            raise ConfigError(f"gaussian pump needs {exc}") from exc
    raise ConfigError(f"unknown pump profile {kind!r}")


def run_pdc(config):
    """Full pipeline materials -> greens -> alpha -> H_NL -> psi."""
    geom = config.geometry()
    omega2, omega3 = config.carriers()
    doc = config.raw.get("pdc", {})
    grid = config.grid()
    gs = greens.green_fields(geom, sorted({omega2, omega3, omega2 + omega3}), grid)
    idx = coupling.decimated_indices(grid, int(doc.get("decimate", 15)))
    alpha = coupling.compute_alpha(None, geom, gs, omega2, omega3, grid, idx, idx)
    lattice = quantization.ModeLattice(geom, grid, config.frequency_grid())
    bands = quantization.reduce_to_bands(lattice, config.bands())
    H = coupling.assemble_H_NL(alpha, bands)
    pump = _pump(config, grid, omega2 + omega3)
    time = float(doc.get("time", 0.0)) or float(doc.get("bandwidth_time", 20.0)) / H.widths[1]
    return H, pdc.biphoton_first_order(H, pump, time, int(doc.get("subbins", 32)))


def cmd_pdc(config, out: Path, args) -> int:
    H, psi = run_pdc(config)
    n2, m, n3, _ = psi.values.shape
    flat = psi.matrix
    rows = ((i, j, flat[i, j].real, flat[i, j].imag) for i in range(n2 * m) for j in range(n3 * m))
    write_csv(out / "psi.csv", ["m2", "m3", "re", "im"], rows)
    summary = {
        "carriers": {"omega23": H.carriers[0], "omega2": H.carriers[1], "omega3": H.carriers[2]},
        "band_widths": list(H.widths),
        "time": psi.time,
        "subbins": psi.subbins,
        "norm": psi.strength,
        "units": UNITS_NOTE,
    }
    try:
        purity = pdc.heralded_purity(psi)
    except ZeroAmplitude:
        summary.update({"purity": None, "error": "ZeroAmplitude"})
        write_json(out / "pdc_summary.json", summary)
        log.error("pair amplitude vanishes (chi2 = 0?): purity undefined")
        return EXIT_FAILED
    delta, profile = psi.antidiagonal_profile()
    summary.update({
        "purity": purity,
        "schmidt_values": psi.schmidt_values()[:8],
        "peak_detuning": float(delta[np.argmax(profile)]),
        "fwhm": pdc.fwhm(delta, profile),
        "fwhm_over_2pi_by_T": pdc.fwhm(delta, profile) * psi.time / (2 * np.pi),
    })
    write_json(out / "pdc_summary.json", summary)
    log.info("norm %.6g purity %.6g", psi.strength, purity)
    return _status(0.0 < purity <= 1.0)


COMMANDS = {
    "material-kk": cmd_material_kk,
    "green-verify": cmd_green_verify,
    "alpha": cmd_alpha,
    "noise": cmd_noise,
    "pdc": cmd_pdc,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlqed", description="Quantized chi(2) fields in absorbing dielectrics")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: config 'output' or ./out)")
        p.add_argument("--tol", type=float, help="override the pass tolerance of this check")
        p.add_argument("--refine", type=int, default=1, help="number of grids in the convergence ladder")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.refine < 1:
        log.error("--refine must be at least 1")
        return EXIT_CONFIG
    try:
        config = load_config(args.config)
        out = Path(args.out) if args.out else (config.output or Path("out"))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config, out, args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED
    except (ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
