"""Fault metrics over solved results: current deviation, PSSR, power, tables.

The central quantity is the relative current deviation of the adder
device, sigma = (I_realtime - I_ref) / I_ref.  A transient signature
(spike that returns into the threshold band) reads as an under-powering
glitch; a persistent deviation reads as a triggered Trojan.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .devices import CORNERS
from .engine import AcSample, OperatingPoint, TransientTrace, dc_sweep
from .errors import DomainError, ProbeError
from .faults import TrojanSpec, apply_corner, apply_trojan
from .netlist import Circuit, VoltageSource
from .sensor import BiasSetting, SensorParams, build_sensor, probe_point


class Verdict(str, enum.Enum):
    FAULT_FREE = "FaultFree"
    UNDER_POWER = "UnderPowerSuspected"
    TROJAN = "TrojanSuspected"
    ANOMALOUS = "Anomalous"


@dataclass(frozen=True)
class SigmaSample:
    time: float
    i_realtime: float
    i_ref: float

    @property
    def sigma(self) -> float:
        return sigma(self.i_realtime, self.i_ref)


@dataclass(frozen=True)
class DetectionReport:
    verdict: Verdict
    spike_magnitude: float  # max |sigma|
    residual_vibration: float  # max-min of sigma after the spike window
    sustained_deviation: float  # mean |sigma| over the final 20 %
    detection_latency: float | None  # s from fault onset, None if never crossed
    threshold: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "spike_magnitude": self.spike_magnitude,
            "residual_vibration": self.residual_vibration,
            "sustained_deviation": self.sustained_deviation,
            "detection_latency_s": self.detection_latency,
            "threshold": self.threshold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def sigma(i_realtime: float, i_ref: float) -> float:
    """Relative current deviation (I_realtime - I_ref) / I_ref."""
    if i_ref <= 0.0:
        raise DomainError(f"i_ref must be positive, got {i_ref}")
    return (i_realtime - i_ref) / i_ref


def analyze_trace(trace: TransientTrace, i_ref: float,
                  spike_threshold: float = 0.10, sustain_samples: int = 5,
                  fault_onset: float = 0.0) -> DetectionReport:
    """Classify a transient adder-current trace.

    fault_onset anchors the latency measurement; leave it at 0 when the
    onset is unknown and the latency becomes the absolute crossing time.
    """
    if "I_adder" not in trace.probes:
        raise ProbeError("trace carries no I_adder probe")
    if i_ref <= 0.0:
        raise DomainError("i_ref must be positive")
    s = (trace.probes["I_adder"] - i_ref) / i_ref
    mag = np.abs(s)
    spike = float(mag.max())
    n = len(s)
    tail_start = max(0, n - max(1, int(math.ceil(0.2 * n))))
    sustained = float(np.mean(mag[tail_start:]))

    over = mag > spike_threshold
    if not over.any():
        return DetectionReport(
            verdict=Verdict.FAULT_FREE,
            spike_magnitude=spike,
            residual_vibration=float(s.max() - s.min()),
            sustained_deviation=sustained,
            detection_latency=None,
            threshold=spike_threshold,
        )

    first_cross = int(np.argmax(over))
    latency = float(trace.times[first_cross]) - fault_onset
    peak = int(np.argmax(mag))
    after_peak = np.nonzero(~over[peak:])[0]
    window_end = peak + int(after_peak[0]) if len(after_peak) else n
    residual = float(s[window_end:].max() - s[window_end:].min()) if window_end < n else 0.0

    final = mag[-min(sustain_samples, n):]
    if bool(np.all(final > spike_threshold)):
        verdict = Verdict.TROJAN
    elif bool(np.all(final <= spike_threshold)):
        verdict = Verdict.UNDER_POWER
    else:
        verdict = Verdict.ANOMALOUS
    return DetectionReport(
        verdict=verdict,
        spike_magnitude=spike,
        residual_vibration=residual,
        sustained_deviation=sustained,
        detection_latency=latency,
        threshold=spike_threshold,
    )


def pssr(samples: list[AcSample]) -> list[tuple[float, float]]:
    """Supply-ripple rejection per frequency, in dB (negative = rejection)."""
    out = []
    for s in samples:
        if s.transfer_magnitude <= 0.0:
            raise DomainError(f"zero transfer magnitude at {s.frequency:g} Hz")
        out.append((s.frequency, 20.0 * math.log10(s.transfer_magnitude)))
    return out


def detect_armed_trojan(golden: OperatingPoint, suspect: OperatingPoint,
                        threshold: float = 5e-6) -> tuple[float, bool]:
    """Compare detection-branch currents of two solved points.

    Returns (delta_i, verdict); verdict is True (Trojan present) when the
    detection branch moved by at least the threshold.
    """
    i_golden = probe_point(golden)["I_det"]
    i_suspect = probe_point(suspect)["I_det"]
    delta = abs(i_golden - i_suspect)
    return delta, delta >= threshold


@dataclass(frozen=True)
class CornerTable:
    temps_c: tuple[float, ...]
    rows: dict[str, tuple[float, ...]]  # corner label -> percent change
    reference_current: float  # TT at 27 C

    def to_csv(self) -> str:
        lines = [f"# reference: TT adder current at 27 C = "
                 f"{self.reference_current:.17g} A"]
        lines.append("corner," + ",".join(f"{t:g}C" for t in self.temps_c))
        for label in ("TT", "FF", "SS"):
            cells = ",".join(f"{v:.17g}" for v in self.rows[label])
            lines.append(f"{label},{cells}")
        return "\n".join(lines) + "\n"


def corner_table(params: SensorParams, bias: BiasSetting,
                 temps_c=(-40.0, 0.0, 40.0, 80.0, 125.0)) -> CornerTable:
    """Percent adder-current change per (corner, temperature) versus TT@27C."""
    golden = build_sensor(params, bias)
    ref = _adder_over_temps(golden, [27.0])[0]
    rows = {}
    for key in ("tt", "ff", "ss"):
        circuit = golden if key == "tt" else apply_corner(golden, CORNERS[key])
        currents = _adder_over_temps(circuit, temps_c)
        rows[CORNERS[key].label] = tuple(100.0 * (i - ref) / ref for i in currents)
    return CornerTable(tuple(temps_c), rows, ref)


@dataclass(frozen=True)
class TrojanTable:
    temps_c: tuple[float, ...]
    rows: dict[str, tuple[float, ...]]  # state -> adder current (A)

    def to_csv(self) -> str:
        lines = ["state," + ",".join(f"{t:g}C_uA" for t in self.temps_c)]
        for state in ("free", "armed", "triggered"):
            cells = ",".join(f"{v * 1e6:.17g}" for v in self.rows[state])
            lines.append(f"{state},{cells}")
        return "\n".join(lines) + "\n"


def trojan_table(params: SensorParams, bias: BiasSetting,
                 temps_c=(-40.0, 27.0, 125.0),
                 trojan: TrojanSpec | None = None) -> TrojanTable:
    """Adder current per Trojan state and temperature."""
    spec = trojan or TrojanSpec()
    golden = build_sensor(params, bias)
    variants = {
        "free": golden,
        "armed": apply_trojan(golden, TrojanSpec("Armed", spec.delta_bias,
                                                 spec.leakage_conductance)),
        "triggered": apply_trojan(golden, TrojanSpec("Triggered", spec.delta_bias,
                                                     spec.leakage_conductance)),
    }
    rows = {state: tuple(_adder_over_temps(circ, temps_c))
            for state, circ in variants.items()}
    return TrojanTable(tuple(temps_c), rows)


def _adder_over_temps(circuit: Circuit, temps_c) -> list[float]:
    temps_k = [273.15 + t for t in temps_c]
    return [probe_point(op)["I_adder"] for _, op in
            dc_sweep(circuit, "temperature", temps_k)]


def power_estimate(circuit: Circuit, op: OperatingPoint) -> float:
    """Total power delivered by the voltage sources at a solved point.

    Source branch currents are measured into the + terminal, so a source
    doing work reads negative and delivered power is -V*I summed over
    sources.
    """
    total = 0.0
    for dev in circuit.devices:
        if isinstance(dev, VoltageSource):
            total += -dev.waveform.dc * op.branch_currents[dev.name]
    return total


def pssr_csv(points: list[tuple[float, float]]) -> str:
    lines = ["frequency_hz,pssr_db"]
    for f, db in points:
        lines.append(f"{f:.17g},{db:.17g}")
    return "\n".join(lines) + "\n"
