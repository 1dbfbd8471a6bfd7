"""Command-line entry point: ``ionpair <command> --config <path> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import data_path, parse_config
from .errors import ConfigError, IonPairError
from .propagate import propagate, write_profile_csv
from .reference import load_reference_table

COMMANDS = (
    "simulate",
    "sweep-pump-power",
    "sweep-pump-wavelength",
    "sweep-pairing",
    "invert-pairing",
    "optimize-length",
    "show-reference-table",
)


def _mw(p):
    return f"{p * 1e3:.3f} mW"


def _nm(w):
    return f"{w * 1e9:.0f}nm"


def _write(path, writer, *args, **kwargs):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer(*args, fh, **kwargs)
    return path


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")
    return path


def _header(cfg):
    return f"config_digest: {cfg.digest}"


def cmd_simulate(cfg, out):
    res = propagate(cfg.amplifier)
    amp = cfg.amplifier
    _write(out / "simulate_profile.csv", write_profile_csv, res, preamble=[_header(cfg)])
    lines = [
        _header(cfg),
        f"fiber length = {amp.length:.4g} m, pairing k = {amp.pairing.k:.4f}",
        f"signal in  = {_mw(amp.signal.power)} @ {amp.signal.wavelength * 1e9:.1f} nm",
        f"pump in    = {_mw(amp.pump.power)} @ {amp.pump.wavelength * 1e9:.1f} nm",
        f"signal out = {_mw(res.signal_output)}",
        f"pump out   = {_mw(res.pump_output)}",
        f"iterations = {res.iterations}, residual = {res.residual:.3e}",
    ]
    _write_text(out / "simulate_summary.txt", "\n".join(lines))
    return lines[1:]


def cmd_sweep_pump_power(cfg, out):
    amp = cfg.amplifier
    powers = cfg.get("sweep.pump_powers", tuple(np.round(np.arange(0, 2.5001, 0.1), 12)))
    report = [_header(cfg)]
    for wl in cfg.pump_power_wavelengths:
        sweep = analysis.sweep_pump_power(amp.with_pump(wavelength=wl), powers, n_jobs=cfg.jobs)
        _write(out / f"sweep_pump_power_{_nm(wl)}.csv", analysis.write_sweep_csv, sweep,
               digest=cfg.digest, extra_meta=[f"pump wavelength: {wl * 1e9:.1f} nm"])
        try:
            fit = analysis.fit_slope_efficiency(sweep)
            report.append(
                f"{wl * 1e9:.0f} nm pump: slope efficiency = {100 * fit.slope:.1f} % "
                f"(fit window {fit.window[0]:.3g}-{fit.window[1]:.3g} W, "
                f"{fit.n_points} points, rms {_mw(fit.rms)}); max output {_mw(np.nanmax(sweep.signal_out))}"
            )
        except IonPairError as exc:
            report.append(f"{wl * 1e9:.0f} nm pump: no slope fit ({exc})")
    _write_text(out / "slope_efficiency.txt", "\n".join(report))
    return report[1:]


def cmd_sweep_pump_wavelength(cfg, out):
    wls = cfg.get("sweep.pump_wavelengths", tuple(np.round(np.arange(1700, 2050.1, 10), 9) * 1e-9))
    ks = cfg.pairing_values
    family = analysis.sweep_pump_wavelength(cfg.amplifier, wls, ks, n_jobs=cfg.jobs)
    report = []
    for k, sweep in family.items():
        _write(out / f"sweep_pump_wavelength_k{k:.3f}.csv", analysis.write_sweep_csv, sweep,
               digest=cfg.digest, extra_meta=[f"pairing k: {k:.4f}",
                                              f"pump power: {cfg.amplifier.pump.power:.6g} W"])
        i = int(np.nanargmax(sweep.signal_out))
        report.append(f"k = {k:.3f}: best pump {sweep.x[i] * 1e9:.0f} nm -> "
                      f"{_mw(sweep.signal_out[i])}, {len(sweep.failures)} failed points")
    return report


def cmd_sweep_pairing(cfg, out):
    wls = cfg.get("sweep.pairing_pump_wavelengths")
    sweep = analysis.sweep_pairing(cfg.amplifier, cfg.pairing_values, wls, n_jobs=cfg.jobs)
    _write(out / "sweep_pairing.csv", analysis.write_sweep_csv, sweep, digest=cfg.digest,
           extra_meta=[f"pump power: {cfg.amplifier.pump.power:.6g} W"])
    report = [f"k = {k:.3f}: {_mw(p)}" for k, p in zip(sweep.x, sweep.signal_out)]
    if "ratio" in sweep.aux:
        report = [line + f", ratio {r:.4f}" for line, r in zip(report, sweep.aux["ratio"])]
    return report


def cmd_invert_pairing(cfg, out):
    ratio = cfg.require("invert.measured_ratio")
    est = analysis.invert_pairing(
        cfg.amplifier,
        cfg.invert_pump_wavelengths,
        ratio,
        pump_power=cfg.get("invert.pump_power"),
        k_max=cfg.get("invert.k_max", analysis.INVERSION_K_MAX),
        n_jobs=cfg.jobs,
    )
    _write(out / "ratio_curve.csv", analysis.write_ratio_curve_csv, est, digest=cfg.digest)
    summary = est.summary()
    _write_text(out / "pairing_estimate.txt", _header(cfg) + "\n" + summary)
    return summary.splitlines()


def cmd_optimize_length(cfg, out):
    bracket = cfg.get("optimize.bracket", (1.0, 4.0))
    opt = analysis.optimize_length(cfg.amplifier, bracket, n_jobs=cfg.jobs)

    def write_scan(fh):
        fh.write(f"# {_header(cfg)}\n")
        fh.write("length_m,signal_out_W\n")
        for L, p in zip(opt.scan_lengths, opt.scan_outputs):
            fh.write(f"{L:.6f},{p:.9e}\n")

    _write(out / "optimize_length_scan.csv", write_scan)
    lines = [f"optimum length = {opt.length:.4f} m, signal out = {_mw(opt.output)}",
             f"propagations = {opt.evaluations}"]
    _write_text(out / "optimize_length.txt", _header(cfg) + "\n" + "\n".join(lines))
    return lines


HANDLERS = {
    "simulate": cmd_simulate,
    "sweep-pump-power": cmd_sweep_pump_power,
    "sweep-pump-wavelength": cmd_sweep_pump_wavelength,
    "sweep-pairing": cmd_sweep_pairing,
    "invert-pairing": cmd_invert_pairing,
    "optimize-length": cmd_optimize_length,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ionpair",
        description="In-band pumped doped-fiber amplifier simulator with ion-pairing inversion.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="run configuration file (shipped fixtures are found by name)")
    parser.add_argument("--out", help="output directory (default: output.directory or ./out)")
    parser.add_argument("--ase", choices=("on", "off"), help="override ase.enabled")
    parser.add_argument("--steps", type=float, metavar="MM", help="RK4 step in mm")
    parser.add_argument("--jobs", type=int, metavar="N", help="worker threads for sweeps")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration entry (repeatable)")
    return parser


def _config_path(name):
    p = Path(name)
    if p.exists():
        return p
    shipped = data_path(name)
    return shipped if shipped.exists() else p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "show-reference-table":
        table = load_reference_table()
        print(table.render())
        return 0
    if not args.config:
        parser.error(f"{args.command} requires --config")
    if args.steps is not None and not args.steps > 0:
        parser.error("--steps must be positive")
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")

    overrides = list(args.set)
    if args.ase:
        overrides.append(f"ase.enabled = {args.ase}")
    if args.steps is not None:
        overrides.append(f"numerics.step = {args.steps!r} mm")
    if args.jobs is not None:
        overrides.append(f"numerics.jobs = {args.jobs}")
    try:
        cfg = parse_config(_config_path(args.config), overrides, args.out)
        lines = HANDLERS[args.command](cfg, cfg.output_dir)
    except (IonPairError, OSError) as exc:
        kind = "config error" if isinstance(exc, ConfigError) else "error"
        print(f"ionpair {args.command}: {kind}: {exc}", file=sys.stderr)
        return 1
    print(f"ionpair {args.command} [{cfg.digest[:12]}] -> {cfg.output_dir}")
    for line in lines:
        print("  " + line)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
