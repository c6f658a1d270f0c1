"""Development harness: calibrate the shipped defaults and report every
headline metric the acceptance suite will check.

Usage: python tools/tune_defaults.py [--quick]
"""

import argparse
import sys
import time

import numpy as np

from ztcsense import faults, monitor, sensor
from ztcsense.devices import CORNERS
from ztcsense.engine import ac_analysis, dc_operating_point, transient
from ztcsense.faults import GlitchSpec, TrojanSpec
from ztcsense.cli import _with_supply_ripple


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="skip transients")
    ap.add_argument("--bias", nargs=2, type=float, default=None,
                    help="use an explicit (vgs1, vgs2) instead of calibrating")
    args = ap.parse_args()

    params = sensor.DEFAULT_PARAMS
    t0 = time.time()
    ztc = sensor.default_ztc()
    t_mid = 0.5 * (ztc.temp_grid.min() + ztc.temp_grid.max())
    print(f"[ztc] v_ztc={ztc.v_ztc:.5f}  analytic="
          f"{sensor.analytic_ztc(params.nmos_card, t_mid):.5f}  "
          f"({time.time()-t0:.1f}s)")

    if args.bias:
        bias = sensor.BiasSetting(args.bias[0], args.bias[1],
                                  sensor._ladder_resistances(params, *args.bias),
                                  49e-6)
        print(f"[bias] manual vgs1={bias.vgs1:.4f} vgs2={bias.vgs2:.4f}")
    else:
        t0 = time.time()
        bias = sensor.calibrate_bias(params, ztc, 49e-6)
        print(f"[bias] vgs1={bias.vgs1:.5f} vgs2={bias.vgs2:.5f} "
              f"({time.time()-t0:.1f}s)")

    temps = sensor.temp_grid_celsius(params)
    prof = sensor.flatness_profile(params, bias, temps)
    i_add = prof["I_adder"]
    spread = i_add.max() - i_add.min()
    print(f"[flat] I_adder(27C)={sensor.golden_adder_current(params, bias, 300.15)*1e6:.3f}uA "
          f"spread={spread*1e6:.3f}uA ({100*spread/49e-6:.2f}% of 49uA)")
    dP = np.diff(prof["I_PTAT"])
    dC = np.diff(prof["I_CTAT"])
    print(f"[flat] PTAT strictly increasing: {bool((dP > 0).all())} "
          f"(I_P: {prof['I_PTAT'][0]*1e6:.2f}..{prof['I_PTAT'][-1]*1e6:.2f}uA)")
    print(f"[flat] CTAT strictly decreasing: {bool((dC < 0).all())} "
          f"(I_C: {prof['I_CTAT'][0]*1e6:.2f}..{prof['I_CTAT'][-1]*1e6:.2f}uA)")
    print(f"[flat] I_det(27C)={prof['I_det'][len(prof['I_det'])//2]*1e6:.2f}uA "
          f"range {prof['I_det'].min()*1e6:.2f}..{prof['I_det'].max()*1e6:.2f}uA")

    golden = sensor.build_sensor(params, bias)
    op27 = dc_operating_point(golden, 300.15)
    pw = monitor.power_estimate(golden, op27)
    print(f"[power] {pw*1e6:.1f} uW  (bounds 10..200)")

    # trojan tables
    tro = monitor.trojan_table(params, bias)
    for state in ("free", "armed", "triggered"):
        row = " ".join(f"{v*1e6:7.2f}" for v in tro.rows[state])
        print(f"[trojan] {state:9s} {row}  uA @ {tro.temps_c}")
    free = np.array(tro.rows["free"]); armed = np.array(tro.rows["armed"])
    trig = np.array(tro.rows["triggered"])
    print(f"[trojan] armed dev %: {100*np.abs(armed-free)/free}")
    print(f"[trojan] trig strictly decreasing: {bool((np.diff(trig) < 0).all())}")
    paper = np.array([45.35e-6, 42.02e-6, 37.51e-6])
    print(f"[trojan] trig vs paper cells %: {100*(trig-paper)/paper}")
    print(f"[trojan] sustained sigma@125C = {(trig[2]-free[2])/free[2]:.4f} (need |.|>=0.15)")

    armed_c = faults.apply_trojan(golden, TrojanSpec())
    op_armed = dc_operating_point(armed_c, 300.15)
    delta, verdict = monitor.detect_armed_trojan(op27, op_armed)
    print(f"[armed-det] delta_i={delta*1e6:.2f}uA verdict={verdict} (need >=5uA)")
    print(f"[armed-det] armed adder dev @27C = "
          f"{abs(sensor.probe_point(op_armed)['I_adder']-sensor.probe_point(op27)['I_adder'])/sensor.probe_point(op27)['I_adder']*100:.3f}%")

    # corner table
    ct = monitor.corner_table(params, bias)
    for label in ("TT", "FF", "SS"):
        row = " ".join(f"{v:7.2f}" for v in ct.rows[label])
        print(f"[corner] {label} {row} % @ {ct.temps_c}")
    cells = {(lab, t): v for lab in ("TT", "FF", "SS")
             for t, v in zip(ct.temps_c, ct.rows[lab])}
    ss40 = cells[("SS", -40.0)]
    biggest = max(abs(v) for v in cells.values())
    print(f"[corner] SS@-40={ss40:.2f}% (need positive, biggest, in [5.15,20.6]); "
          f"max|cell|={biggest:.2f}")
    ff = ct.rows["FF"]
    print(f"[corner] FF signs {'OK' if ff[0]<0 and ff[1]<0 and ff[2]>0 and ff[3]>0 and ff[4]>0 else 'BAD'}"
          f" monotone {'OK' if all(np.diff(ff)>0) else 'BAD'}")
    print(f"[corner] TT row max |.| = {max(abs(v) for v in ct.rows['TT']):.2f}% (need <=3)")

    # pssr
    rippled = _with_supply_ripple(golden, 1.0)
    op_r = dc_operating_point(rippled, 300.15)
    freqs = 10.0 ** np.arange(1, 9.1, 0.25)
    pts = monitor.pssr(ac_analysis(rippled, op_r, freqs, "VDDM", sensor.OUTPUT_NODE))
    db1k = [db for f, db in pts if abs(f - 1e3) == min(abs(ff - 1e3) for ff, _ in pts)][0]
    low = min(db for f, db in pts if f <= 1e6)
    dbs = [db for _, db in pts]
    print(f"[pssr] @1kHz={db1k:.1f}dB (need <=-40); best<=1MHz={low:.1f}dB "
          f"(target -69+-15); hi-f trend {dbs[-1]-dbs[0]:+.1f}dB")

    if args.quick:
        return

    # transients
    i_ref = sensor.probe_point(op27)["I_adder"]
    glitch = GlitchSpec()
    for scen in ("underpower-ptat", "underpower-ctat"):
        t0 = time.time()
        c = faults.build_scenario(golden, scen, glitch=glitch)
        tr = sensor.attach_probes(transient(c, 5e-9, 1e-12, 300.15))
        rep = monitor.analyze_trace(tr, i_ref, fault_onset=glitch.t_start)
        print(f"[{scen}] verdict={rep.verdict.value} spike={rep.spike_magnitude:.3f} "
              f"resid={rep.residual_vibration:.3f} latency={rep.detection_latency:.3e} "
              f"sustained={rep.sustained_deviation:.4f} ({time.time()-t0:.1f}s)")
    t0 = time.time()
    tr = sensor.attach_probes(transient(golden, 2e-9, 1e-12, 300.15))
    rep = monitor.analyze_trace(tr, i_ref)
    print(f"[golden-tran] verdict={rep.verdict.value} spike={rep.spike_magnitude:.5f} "
          f"({time.time()-t0:.1f}s)")


if __name__ == "__main__":
    sys.exit(main())
