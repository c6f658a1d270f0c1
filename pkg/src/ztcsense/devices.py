"""Temperature-dependent level-1 MOSFET evaluation and process corners.

The drain-current model is the square law with channel-length modulation.
Temperature enters through two competing effects: a linear threshold slope
``vth(T) = vth0 - tcv*(T - t_nom)`` and a mobility power law
``k(T) = kp*(T/t_nom)**(-bex)``.  Their tug-of-war produces the zero
temperature coefficient bias point the sensor is built around.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import RangeError

T_NOM = 300.15  # kelvin, 27 C
TEMP_MIN = 200.0
TEMP_MAX = 450.0


@dataclass(frozen=True)
class ModelCard:
    """One process card: polarity plus the square-law parameter set."""

    name: str
    polarity: str  # "N" or "P"
    vth0: float  # V, threshold magnitude at t_nom
    kp: float  # A/V^2, transconductance factor at t_nom
    lam: float  # 1/V, channel-length modulation
    tcv: float  # V/K, linear threshold temperature slope
    bex: float  # mobility power-law exponent
    cgs: float  # F
    cgd: float  # F
    t_nom: float = T_NOM

    def __post_init__(self):
        if self.polarity not in ("N", "P"):
            raise ValueError(f"polarity must be N or P, got {self.polarity!r}")
        if self.kp <= 0:
            raise ValueError("kp must be positive")
        if self.bex <= 0:
            raise ValueError("bex must be positive")
        if self.tcv < 0:
            raise ValueError("tcv must be non-negative")
        if self.lam < 0 or self.cgs < 0 or self.cgd < 0:
            raise ValueError("lam, cgs, cgd must be non-negative")


@dataclass(frozen=True)
class Corner:
    """Correlated fabrication extreme as threshold and kp shifts."""

    label: str  # TT, FF or SS
    dvth: float  # V added to vth0
    kp_scale: float

    def __post_init__(self):
        if self.label == "TT" and (self.dvth != 0.0 or self.kp_scale != 1.0):
            raise ValueError("TT corner must be the identity")
        if self.label == "FF" and not (self.dvth < 0.0 and self.kp_scale > 1.0):
            raise ValueError("FF must lower vth and raise kp")
        if self.label == "SS" and not (self.dvth > 0.0 and self.kp_scale < 1.0):
            raise ValueError("SS must raise vth and lower kp")


CORNERS = {
    "tt": Corner("TT", 0.0, 1.0),
    "ff": Corner("FF", -0.040, 1.01),
    "ss": Corner("SS", +0.040, 0.99),
}

# Shipped default cards.  bex = 2 (upper end of the usual 1.5..2 band)
# pulls the diode-connected ZTC point down to about 1.05 V, leaving the
# above-ZTC bias region inside a 1.8 V supply.  The P card shares the
# threshold and temperature laws so the N-card ZTC analysis carries over
# to the PMOS sensing pair.
DEFAULT_NMOS = ModelCard(
    name="NCH", polarity="N", vth0=0.45, kp=3.0e-4, lam=0.05,
    tcv=2.0e-3, bex=2.0, cgs=0.20e-12, cgd=0.10e-12,
)
DEFAULT_PMOS = ModelCard(
    name="PCH", polarity="P", vth0=0.45, kp=1.2e-4, lam=0.05,
    tcv=2.0e-3, bex=2.45, cgs=0.10e-12, cgd=0.05e-12,
)


def _check_temperature(temperature: float) -> None:
    if not (TEMP_MIN <= temperature <= TEMP_MAX):
        raise RangeError(
            f"temperature {temperature} K outside [{TEMP_MIN}, {TEMP_MAX}] K"
        )


def vth_at(card: ModelCard, temperature: float) -> float:
    """Threshold voltage at the given temperature, linear in T."""
    _check_temperature(temperature)
    return card.vth0 - card.tcv * (temperature - card.t_nom)


def k_at(card: ModelCard, temperature: float) -> float:
    """Transconductance factor at the given temperature (mobility law)."""
    _check_temperature(temperature)
    return card.kp * (temperature / card.t_nom) ** (-card.bex)


def _square_law(beta: float, lam: float, vov: float, vds: float):
    """Core square law for vds >= 0.  Returns (id, gm, gds)."""
    if vov <= 0.0:
        return 0.0, 0.0, 0.0
    clm = 1.0 + lam * vds
    if vds < vov:  # triode
        shape = vov * vds - 0.5 * vds * vds
        i = beta * shape * clm
        gm = beta * vds * clm
        gds = beta * ((vov - vds) * clm + shape * lam)
    else:  # saturation
        i = 0.5 * beta * vov * vov * clm
        gm = beta * vov * clm
        gds = 0.5 * beta * vov * vov * lam
    return i, gm, gds


def mosfet_current(
    card: ModelCard,
    vgs: float,
    vds: float,
    temperature: float,
    w_over_l: float = 1.0,
):
    """Drain current and small-signal conductances at one bias point.

    Terminal voltages are polarity-normalized values: for a P device pass
    source-referred magnitudes (vsg, vsd) exactly like an N device.
    Negative vds is handled by the usual drain/source swap so transient
    excursions stay well defined.
    """
    _check_temperature(temperature)
    vth = vth_at(card, temperature)
    beta = k_at(card, temperature) * w_over_l
    if vds >= 0.0:
        return _square_law(beta, card.lam, vgs - vth, vds)
    # swapped operation: vgs' = vgd, vds' = -vds, current reverses
    i, gm_s, gds_s = _square_law(beta, card.lam, (vgs - vds) - vth, -vds)
    return -i, -gm_s, gm_s + gds_s


def corner_card(base: ModelCard, corner: Corner) -> ModelCard:
    """Shift a card to a process corner; all other fields unchanged."""
    return replace(base, vth0=base.vth0 + corner.dvth, kp=base.kp * corner.kp_scale)
