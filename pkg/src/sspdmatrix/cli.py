"""Command-line runner: one subcommand per experiment.

Exit status is 0 on success, 1 when the experiment fails (bad chip file,
missing device, failed fit, too few counts) and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .chipmatrix import AddressError, ChipConfigError
from .experiments import ExperimentConfig, ExperimentError, run_experiment
from .fit import FitError
from .presets import PRESETS

OUT_ENV = "SSPD_OUT_DIR"

SUBCOMMANDS = {
    "jitter": "jitter",
    "ringdown": "ringdown",
    "efficiency": "efficiency_sweep",
    "darkcounts": "darkcount_sweep",
    "spectrum": "spectrum",
    "survey": "survey",
}


def _position(text: str) -> tuple[int, int]:
    try:
        row, col = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'row,col', got {text!r}") from None
    return row, col


def _float_list(text: str) -> tuple[float, ...]:
    """``a,b,c`` or ``start:stop:count`` (inclusive linspace)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return tuple(float(v) for v in np.round(np.linspace(float(start), float(stop), int(count)), 10))
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b,c' or 'start:stop:count', got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    values = _float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspdmatrix", description="Simulated measurements on an SSPD chip matrix.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--chip", help="chip config JSON (default: bundled reference chip)")
    g.add_argument("--device", type=_position, help="matrix position 'row,col'")
    g.add_argument("--seed", type=int, help="64-bit seed; required for stochastic experiments")
    g.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results/<command>)")
    g.add_argument("--preset", choices=sorted(PRESETS), help="load device, operating point and expectations")
    g.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    g.add_argument("--no-timestamp", action="store_true", help="omit the timestamp comment from SVG output")
    g.add_argument("--bias", type=float, help="bias current as a fraction of I_c")
    g.add_argument("--temperature", dest="temperature_k", type=float, help="temperature (K)")
    g.add_argument("--wavelength", dest="wavelength_nm", type=float, help="laser wavelength (nm)")

    optical = argparse.ArgumentParser(add_help=False)
    g = optical.add_argument_group("optical input")
    g.add_argument("--rep-rate", dest="rep_rate_hz", type=float, help="laser repetition rate (Hz)")
    g.add_argument("--power-dbm", dest="avg_power_dbm", type=float, help="average laser power (dBm)")
    g.add_argument("--attenuation-db", dest="attenuation_db", type=float, help="variable attenuator setting (dB)")
    g.add_argument("--mean-photons", type=float, help="photons per pulse at the detector arm (overrides the dB chain)")
    g.add_argument("--clicks-per-sync", type=float, help="choose the photon number for this click probability")

    timing = argparse.ArgumentParser(add_help=False)
    g = timing.add_argument_group("acquisition")
    g.add_argument("--syncs", type=int, help="number of laser syncs")
    g.add_argument("--bin-width", dest="bin_width_ps", type=int, help="histogram bin width (ps)")
    g.add_argument("--range", dest="range_ps", type=int, help="histogram range (ps)")
    g.add_argument("--jitter-fwhm", dest="jitter_fwhm_ps", type=float, help="detector jitter FWHM (ps)")
    g.add_argument("--instrument-jitter", dest="instrument_jitter_ps", type=float,
                   help="instrument jitter FWHM added in quadrature (ps)")
    g.add_argument("--save-tags", action="store_true", default=None, help="also write the raw tag stream")

    sweep = argparse.ArgumentParser(add_help=False)
    g = sweep.add_argument_group("sweep")
    g.add_argument("--biases", type=_float_list, help="bias points 'a,b,c' or 'start:stop:count'")
    g.add_argument("--temperatures", type=_float_list, help="temperatures (K) 'a,b,c'")

    sub.add_parser("jitter", parents=[common, optical, timing], help="timing jitter histogram")
    p = sub.add_parser("ringdown", parents=[common, optical, timing], help="ballistic ring-down")
    p.add_argument("--port", choices=("drop", "through"))
    p.add_argument("--min-peak-height", type=float, help="peak threshold relative to the histogram maximum")
    p.add_argument("--min-peak-separation", dest="min_peak_separation_ps", type=float, help="(ps)")
    p = sub.add_parser("efficiency", parents=[common, optical, sweep], help="detection efficiency sweep")
    p.add_argument("--trials", type=int, help="laser pulses per sweep point")
    p = sub.add_parser("darkcounts", parents=[common, sweep], help="dark count sweep")
    p.add_argument("--window-s", dest="dark_window_s", type=float, help="counting time per point (s)")
    p.add_argument("--n-windows", type=int, help="sub-windows for the dispersion test")
    p = sub.add_parser("spectrum", parents=[common], help="ring transmission spectrum")
    p.add_argument("--span-fsr", type=float, help="sweep span in free spectral ranges")
    p.add_argument("--points", type=int, help="wavelength points")
    p.add_argument("--fit-window", dest="fit_window_nm", type=_pair, help="Lorentzian fit window 'lo,hi' (nm)")
    p = sub.add_parser("survey", parents=[common], help="critical-current survey")
    p.add_argument("--prescreen-db", type=float, help="coupler deviation threshold (dB)")
    return parser


_NOT_CONFIG = {"command", "out", "preset", "no_plot", "no_timestamp"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    experiment = SUBCOMMANDS[args.command]
    values = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    values["out_dir"] = args.out or os.environ.get(OUT_ENV) or os.path.join("results", args.command)
    values["plot"] = not args.no_plot
    values["timestamp"] = not args.no_timestamp
    if args.preset:
        return ExperimentConfig.from_preset(args.preset, experiment, **values)
    return ExperimentConfig(experiment=experiment, **values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ValueError as exc:
        print(f"sspdmatrix: error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
    except (ExperimentError, FitError, ChipConfigError, AddressError, OSError, ValueError) as exc:
        print(f"sspdmatrix {args.command}: {exc}", file=sys.stderr)
        return 1
    for message in report.warnings:
        print(f"warning: {message}", file=sys.stderr)
    summary = {k: v for k, v in report.results.items() if not isinstance(v, (list, dict))}
    print(json.dumps(summary, indent=2, default=float))
    for check in report.checks:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: {check['value']:.6g} (target {check['target']:g} +/- {check['tolerance']:g})")
    print(f"report: {os.path.join(config.out_dir, 'report.json')}")
    return 0
