"""Attacked variants of a sensor circuit: glitches, Trojans, corners.

Every operation is a pure circuit-to-circuit transform; the input
circuit is never mutated, so one golden build can fan out into any
number of attacked copies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

from .devices import Corner, CORNERS, corner_card
from .errors import FaultSpecError, TopologyError
from .netlist import Circuit, Mosfet, Resistor, VoltageSource, Waveform
from .sensor import BRANCH_SUPPLY, PTAT_GATE_NODE

TROJAN_LEAK_NAME = "RTROJAN"
TROJAN_BIAS_NAME = "VTROJAN"
TROJAN_GATE_NODE = "trojan_gate"


@dataclass(frozen=True)
class GlitchSpec:
    """Under-powering pulse: nominal rail pulled down and restored."""

    v_nominal: float = 1.8
    v_glitch: float = 0.8
    t_start: float = 1e-9
    duration: float = 100e-12
    edge_time: float = 10e-12

    def __post_init__(self):
        if not (0.0 <= self.v_glitch < self.v_nominal):
            raise FaultSpecError("need 0 <= v_glitch < v_nominal")
        if self.duration <= 2.0 * self.edge_time:
            raise FaultSpecError("duration must exceed both ramps")
        if self.t_start < 0.0 or self.edge_time <= 0.0:
            raise FaultSpecError("t_start must be >= 0 and edge_time > 0")


@dataclass(frozen=True)
class TrojanSpec:
    """Analog Trojan on the PTAT gate bias node.

    Armed, it only loads the node with a small parasitic conductance;
    triggered, it additionally lifts the gate by delta_bias, starving the
    PTAT device.
    """

    state: str = "Armed"  # "Armed" or "Triggered"
    delta_bias: float = 0.50
    leakage_conductance: float = 11.8e-6

    def __post_init__(self):
        if self.state not in ("Armed", "Triggered"):
            raise FaultSpecError(f"unknown Trojan state {self.state!r}")
        if self.delta_bias <= 0.0:
            raise FaultSpecError("delta_bias must be positive")
        if self.leakage_conductance < 0.0:
            raise FaultSpecError("leakage_conductance must be non-negative")


def glitch_waveform(spec: GlitchSpec) -> Waveform:
    """PWL rail: nominal, 10 ps-class ramp down, hold, ramp up, nominal.

    The disturbed interval (first ramp start to last ramp end) equals
    spec.duration exactly.
    """
    t0 = spec.t_start
    t1 = t0 + spec.edge_time
    t2 = t0 + spec.duration - spec.edge_time
    t3 = t0 + spec.duration
    return Waveform(
        dc=spec.v_nominal,
        pwl=(
            (t0, spec.v_nominal),
            (t1, spec.v_glitch),
            (t2, spec.v_glitch),
            (t3, spec.v_nominal),
        ),
    )


def apply_underpower(circuit: Circuit, target_branch: str, spec: GlitchSpec) -> Circuit:
    """Attach the glitch to one branch supply pin; everything else untouched."""
    branch = target_branch.upper()
    if branch not in BRANCH_SUPPLY:
        raise TopologyError(f"unknown branch {target_branch!r}; use PTAT or CTAT")
    source_name = BRANCH_SUPPLY[branch]
    wave = glitch_waveform(spec)
    devices = []
    found = False
    for dev in circuit.devices:
        if isinstance(dev, VoltageSource) and dev.name.upper() == source_name:
            devices.append(dc_replace(dev, waveform=dc_replace(wave, ac_mag=dev.waveform.ac_mag)))
            found = True
        else:
            devices.append(dev)
    if not found:
        raise TopologyError(f"branch supply source {source_name} absent")
    return Circuit(tuple(devices), dict(circuit.model_cards),
                   circuit.ambient_temperature)


def apply_trojan(circuit: Circuit, spec: TrojanSpec) -> Circuit:
    """Attach the Trojan to the PTAT gate bias node.

    Armed: only the parasitic leak (omitted entirely when its conductance
    is zero, which makes the null attack DC-identical to golden).
    Triggered: a series source additionally raises the PTAT gate above
    the divider tap by delta_bias.
    """
    if PTAT_GATE_NODE not in circuit.nodes:
        raise TopologyError(f"PTAT gate node {PTAT_GATE_NODE!r} absent")
    devices = list(circuit.devices)

    gate_node = PTAT_GATE_NODE
    if spec.state == "Triggered":
        gate_node = TROJAN_GATE_NODE
        rewired = False
        for i, dev in enumerate(devices):
            if isinstance(dev, Mosfet) and dev.name.upper() == "MPTAT":
                devices[i] = dc_replace(dev, gate=gate_node)
                rewired = True
        if not rewired:
            raise TopologyError("PTAT device absent; cannot insert trigger bias")
        devices.append(VoltageSource(TROJAN_BIAS_NAME, gate_node, PTAT_GATE_NODE,
                                     Waveform(spec.delta_bias)))

    if spec.leakage_conductance > 0.0:
        devices.append(Resistor(TROJAN_LEAK_NAME, gate_node, "0",
                                1.0 / spec.leakage_conductance))
    return Circuit(tuple(devices), dict(circuit.model_cards),
                   circuit.ambient_temperature)


def apply_corner(circuit: Circuit, corner: Corner) -> Circuit:
    """Swap every model card for its corner variant; structure unchanged."""
    cards = {name: corner_card(card, corner)
             for name, card in circuit.model_cards.items()}
    return Circuit(circuit.devices, cards, circuit.ambient_temperature)


SCENARIOS = ("golden", "underpower-ptat", "underpower-ctat",
             "trojan-armed", "trojan-triggered")


def build_scenario(circuit: Circuit, scenario: str, corner: str = "tt",
                   glitch: GlitchSpec | None = None,
                   trojan: TrojanSpec | None = None) -> Circuit:
    """Resolve a named CLI scenario against a golden sensor circuit."""
    name = scenario.lower()
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    out = circuit
    if name == "underpower-ptat":
        out = apply_underpower(out, "PTAT", glitch or GlitchSpec())
    elif name == "underpower-ctat":
        out = apply_underpower(out, "CTAT", glitch or GlitchSpec())
    elif name == "trojan-armed":
        out = apply_trojan(out, trojan or TrojanSpec(state="Armed"))
    elif name == "trojan-triggered":
        out = apply_trojan(out, dc_replace(trojan or TrojanSpec(), state="Triggered"))
    key = corner.lower()
    if key not in CORNERS:
        raise ValueError(f"unknown corner {corner!r}; use tt, ff or ss")
    if key != "tt":
        out = apply_corner(out, CORNERS[key])
    return out
