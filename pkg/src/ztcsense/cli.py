"""Batch front-end: named scenarios, sweeps, CSV/JSON results plus figures.

Exit codes follow sysexits conventions: 0 success, 2 solver failure,
64 usage error, 74 I/O error.  The output directory comes from --out and
is overridden by the ZTCSENSE_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import faults, figures, monitor, sensor
from .engine import ac_analysis, dc_operating_point, export_trace_csv, transient
from .errors import CalibrationError, ConvergenceError, SingularMatrixError, ZtcSenseError
from .netlist import parse_si, serialize_netlist

EX_OK = 0
EX_SOLVER = 2
EX_USAGE = 64
EX_IOERR = 74


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_range(spec: str) -> np.ndarray:
    """`lo:hi:step` inclusive grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"range must be lo:hi:step, got {spec!r}")
    lo, hi, step = (parse_si(p) for p in parts)
    if step <= 0 or hi < lo:
        raise UsageError(f"bad range {spec!r}")
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def _out_dir(args) -> Path:
    path = Path(os.environ.get("ZTCSENSE_OUT", args.out))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_bias(out_dir: Path) -> sensor.BiasSetting:
    """Calibration artifact from a previous `calibrate` run, else defaults."""
    bias_file = out_dir / "bias.json"
    if bias_file.exists():
        data = json.loads(bias_file.read_text())
        return sensor.BiasSetting(
            vgs1=data["vgs1"], vgs2=data["vgs2"],
            divider_resistances=tuple(data["divider_resistances"]),
            i_target=data["i_target"],
        )
    return sensor.DEFAULT_BIAS


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def build_parser() -> _Parser:
    p = _Parser(prog="ztcsense", description=__doc__)
    p.add_argument("--out", default="ztcsense_out", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)

    zp = sub.add_parser("ztc", help="sweep the diode-connected device and locate the ZTC bias")
    zp.add_argument("--vgs", default="0.35:1.15:0.01", help="vgs grid lo:hi:step (V)")
    zp.add_argument("--temps", default="-40:125:15", help="temperature grid lo:hi:step (C)")

    cp = sub.add_parser("calibrate", help="calibrate the two gate biases for a flat adder current")
    cp.add_argument("--target", default="49u", help="adder current target, e.g. 49u")

    rp = sub.add_parser("run", help="run a named fault scenario")
    rp.add_argument("--scenario", required=True, choices=faults.SCENARIOS)
    rp.add_argument("--corner", default="tt", choices=("tt", "ff", "ss"))
    rp.add_argument("--temp", default="27", help="ambient temperature (C)")
    rp.add_argument("--tstop", default="20n", help="transient stop time (s)")
    rp.add_argument("--dt", default="1p", help="transient step (s)")
    rp.add_argument("--iref", default=None,
                    help="pin sigma reference current (A); default: golden at same T")

    pp = sub.add_parser("pssr", help="supply-ripple rejection sweep")
    pp.add_argument("--fmin", default="10", help="lowest frequency (Hz)")
    pp.add_argument("--fmax", default="1e9", help="highest frequency (Hz)")
    pp.add_argument("--points-per-decade", default="10")

    tp = sub.add_parser("report", help="emit the corner or Trojan table")
    tp.add_argument("table", choices=("corners", "trojan"))
    return p


def _cmd_ztc(args, out: Path) -> int:
    card = sensor.DEFAULT_PARAMS.nmos_card
    vgs = _parse_range(args.vgs)
    temps = 273.15 + _parse_range(args.temps)
    result = sensor.find_ztc(card, 10.0, vgs, temps)
    rows = ["vgs_v," + ",".join(f"i_{t - 273.15:g}C_A" for t in result.temp_grid)]
    for i, v in enumerate(result.vgs_grid):
        rows.append(f"{v:.17g}," + ",".join(f"{c:.17g}" for c in result.currents[i]))
    _write(out / "ztc.csv", "\n".join(rows) + "\n")
    _write(out / "ztc.json", json.dumps({
        "v_ztc": result.v_ztc,
        "spread_at_ztc_a": result.spread_at_ztc,
        "analytic_first_order": sensor.analytic_ztc(card, float(np.mean(result.temp_grid))),
    }, indent=2, sort_keys=True) + "\n")
    figures.render_ztc(result.vgs_grid, result.temp_grid, result.currents,
                       result.v_ztc, out / "ztc.png")
    _write(out / "summary.txt",
           f"ztc sweep: v_ztc = {result.v_ztc:.6f} V, "
           f"spread at ztc = {result.spread_at_ztc:.4e} A\n")
    return EX_OK


def _cmd_calibrate(args, out: Path) -> int:
    params = sensor.DEFAULT_PARAMS
    target = parse_si(args.target)
    ztc = sensor.default_ztc()
    bias = sensor.calibrate_bias(params, ztc, target)
    profile = sensor.flatness_profile(params, bias, sensor.temp_grid_celsius(params))
    spread = float(profile["I_adder"].max() - profile["I_adder"].min())
    _write(out / "bias.json", json.dumps({
        "vgs1": bias.vgs1,
        "vgs2": bias.vgs2,
        "divider_resistances": list(bias.divider_resistances),
        "i_target": bias.i_target,
        "v_ztc": ztc.v_ztc,
        "adder_spread_a": spread,
    }, indent=2, sort_keys=True) + "\n")
    rows = ["temp_c,I_PTAT_A,I_CTAT_A,I_adder_A"]
    for i, t in enumerate(profile["temp_c"]):
        rows.append(",".join(f"{x:.17g}" for x in
                    (t, profile["I_PTAT"][i], profile["I_CTAT"][i], profile["I_adder"][i])))
    _write(out / "flatness.csv", "\n".join(rows) + "\n")
    figures.render_flatness(profile, out / "flatness.png")
    _write(out / "sensor_tt.cir", serialize_netlist(sensor.build_sensor(params, bias)))
    _write(out / "summary.txt",
           f"calibrated: vgs1 = {bias.vgs1:.6f} V, vgs2 = {bias.vgs2:.6f} V, "
           f"spread = {spread:.4e} A ({100 * spread / target:.3f}% of target)\n")
    return EX_OK


def _cmd_run(args, out: Path) -> int:
    params = sensor.DEFAULT_PARAMS
    bias = _load_bias(out)
    temp_c = parse_si(args.temp)
    temp_k = 273.15 + temp_c
    t_stop = parse_si(args.tstop)
    dt = parse_si(args.dt)
    golden = sensor.build_sensor(params, bias)
    glitch = faults.GlitchSpec(v_nominal=params.vdd)
    circuit = faults.build_scenario(golden, args.scenario, corner=args.corner,
                                    glitch=glitch)

    if args.iref is not None:
        i_ref = parse_si(args.iref)
    else:
        ref_circuit = golden if args.corner == "tt" else faults.build_scenario(
            golden, "golden", corner=args.corner)
        i_ref = sensor.probe_point(dc_operating_point(ref_circuit, temp_k))["I_adder"]

    trace = sensor.attach_probes(transient(circuit, t_stop, dt, temp_k))
    onset = glitch.t_start if args.scenario.startswith("underpower") else 0.0
    report = monitor.analyze_trace(trace, i_ref, fault_onset=onset)

    trace.probes["sigma"] = (trace.probes["I_adder"] - i_ref) / i_ref
    export_trace_csv(trace, out / "trace.csv",
                     ["I_PTAT", "I_CTAT", "I_adder", "I_det", "sigma"])
    _write(out / "report.json", report.to_json())
    figures.render_trace(trace, report, out / "trace.png")
    _write(out / "summary.txt", "\n".join([
        f"scenario {args.scenario} at {temp_c:g} C, corner {args.corner.upper()}",
        f"verdict: {report.verdict.value}",
        f"spike magnitude: {report.spike_magnitude:.4f}",
        f"residual vibration: {report.residual_vibration:.4f}",
        f"sustained deviation: {report.sustained_deviation:.4f}",
        f"detection latency: "
        + (f"{report.detection_latency:.3e} s" if report.detection_latency is not None
           else "none"),
    ]) + "\n")
    if args.scenario == "golden" and report.verdict is not monitor.Verdict.FAULT_FREE:
        return EX_SOLVER
    return EX_OK


def _cmd_pssr(args, out: Path) -> int:
    params = sensor.DEFAULT_PARAMS
    bias = _load_bias(out)
    fmin, fmax = parse_si(args.fmin), parse_si(args.fmax)
    ppd = int(parse_si(args.points_per_decade))
    if fmin <= 0 or fmax <= fmin or ppd < 1:
        raise UsageError("need 0 < fmin < fmax and points-per-decade >= 1")
    n = int(round(np.log10(fmax / fmin) * ppd))
    freqs = fmin * (fmax / fmin) ** (np.arange(n + 1) / n)

    golden = sensor.build_sensor(params, bias)
    rippled = _with_supply_ripple(golden, 1.0)
    op = dc_operating_point(rippled, 300.15)
    samples = ac_analysis(rippled, op, freqs, "VDDM", sensor.OUTPUT_NODE)
    points = monitor.pssr(samples)
    _write(out / "pssr.csv", monitor.pssr_csv(points))
    figures.render_pssr(points, out / "pssr.png")
    low = [db for f, db in points if f <= 1e6]
    _write(out / "summary.txt",
           f"pssr sweep {fmin:g}..{fmax:g} Hz: "
           f"best {min(db for _, db in points):.1f} dB, "
           f"within 1 MHz {min(low):.1f} dB\n" if low else "pssr sweep done\n")
    return EX_OK


def _with_supply_ripple(circuit, mag: float):
    """Common AC ripple on every supply pin (worst case shared battery)."""
    from dataclasses import replace as dc_replace
    from .netlist import Circuit, VoltageSource
    devices = []
    for dev in circuit.devices:
        if isinstance(dev, VoltageSource) and dev.name in sensor.SUPPLY_SOURCES:
            devices.append(dc_replace(dev, waveform=dc_replace(dev.waveform, ac_mag=mag)))
        else:
            devices.append(dev)
    return Circuit(tuple(devices), dict(circuit.model_cards),
                   circuit.ambient_temperature)


def _cmd_report(args, out: Path) -> int:
    params = sensor.DEFAULT_PARAMS
    bias = _load_bias(out)
    if args.table == "corners":
        table = monitor.corner_table(params, bias)
        _write(out / "corner_table.csv", table.to_csv())
        figures.render_corner_table(table, out / "corner_table.png")
        _write(out / "summary.txt",
               "corner table written (percent change vs TT at 27 C)\n")
    else:
        table = monitor.trojan_table(params, bias)
        _write(out / "trojan_table.csv", table.to_csv())
        figures.render_trojan_table(table, out / "trojan_table.png")
        _write(out / "summary.txt", "trojan table written (adder current, uA)\n")
    return EX_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out = _out_dir(args)
        handler = {
            "ztc": _cmd_ztc,
            "calibrate": _cmd_calibrate,
            "run": _cmd_run,
            "pssr": _cmd_pssr,
            "report": _cmd_report,
        }[args.command]
        return handler(args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (ConvergenceError, SingularMatrixError, CalibrationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EX_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EX_IOERR
    except ZtcSenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_SOLVER


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
