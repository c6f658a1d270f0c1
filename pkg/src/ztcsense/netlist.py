"""SPICE-subset netlist parsing and serialization.

Grammar (line oriented, ``*`` comments, ``+`` continuations, case
insensitive, ``gnd`` aliases ``0``)::

    M<name> <d> <g> <s> <b> <model> W=<val> L=<val>
    R<name> <n1> <n2> <ohms>
    C<name> <n1> <n2> <farads>
    V<name> <n+> <n-> DC <volts> [PWL( t1 v1 t2 v2 ... )] [AC <mag>]
    .MODEL <name> NMOS|PMOS ( VTO= KP= LAMBDA= TCV= BEX= CGS= CGD= )
    .TEMP <celsius>
    .END

Anything outside this subset is a diagnostic, never a silent skip.
Parsed circuits are immutable and serialize back to text that re-parses
to a structurally equal circuit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .devices import ModelCard, T_NOM
from .errors import NetlistSemanticError, NetlistSyntaxError

_SUFFIX_SHIFT = {"meg": 6, "k": 3, "m": -3, "u": -6, "n": -9, "p": -12}

_NUMBER_RE = re.compile(
    r"^(?P<mant>[+-]?(?:\d+\.?\d*|\.\d+))"
    r"(?:[eE](?P<exp>[+-]?\d+))?"
    r"(?P<suffix>meg|[pnumk])?$",
    re.IGNORECASE,
)


def parse_si(token: str) -> float:
    """Resolve a numeric token with an optional p/n/u/m/k/meg suffix.

    The suffix folds into the decimal exponent before the single
    string-to-double conversion, so ``100p`` is exactly ``1e-10``.
    """
    m = _NUMBER_RE.match(token.strip())
    if m is None:
        raise ValueError(f"not a number: {token!r}")
    shift = _SUFFIX_SHIFT[m.group("suffix").lower()] if m.group("suffix") else 0
    exp = int(m.group("exp") or 0) + shift
    return float(f"{m.group('mant')}e{exp}")


def format_si(value: float) -> str:
    """Shortest decimal text that round-trips the double exactly."""
    return f"{value:.17g}"


@dataclass(frozen=True)
class Waveform:
    """Voltage-source definition: DC level, optional PWL, optional AC magnitude.

    The PWL value holds the first/last breakpoint value outside the
    breakpoint span and interpolates linearly inside it.
    """

    dc: float
    pwl: tuple[tuple[float, float], ...] = ()
    ac_mag: float = 0.0

    def value(self, t: float) -> float:
        if not self.pwl:
            return self.dc
        pts = self.pwl
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                if t1 == t0:
                    return v1
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        return pts[-1][1]

    def min_segment(self) -> float | None:
        """Shortest nonzero breakpoint spacing, or None without a PWL."""
        if len(self.pwl) < 2:
            return None
        gaps = [b[0] - a[0] for a, b in zip(self.pwl, self.pwl[1:]) if b[0] > a[0]]
        return min(gaps) if gaps else None


@dataclass(frozen=True)
class Mosfet:
    name: str
    drain: str
    gate: str
    source: str
    bulk: str
    model: str
    w: float
    l: float


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    farads: float


@dataclass(frozen=True)
class VoltageSource:
    name: str
    plus: str
    minus: str
    waveform: Waveform


Device = Mosfet | Resistor | Capacitor | VoltageSource


@dataclass(frozen=True)
class Circuit:
    """Validated device/node graph. Node ``0`` is ground and always present."""

    devices: tuple[Device, ...]
    model_cards: dict[str, ModelCard] = field(default_factory=dict)
    ambient_temperature: float = T_NOM  # kelvin

    def __post_init__(self):
        _validate(self)

    @property
    def nodes(self) -> tuple[str, ...]:
        seen = {"0": None}
        for dev in self.devices:
            for n in _terminals(dev):
                seen.setdefault(n, None)
        return tuple(seen)

    def device(self, name: str) -> Device:
        key = name.lower()
        for dev in self.devices:
            if dev.name.lower() == key:
                return dev
        raise KeyError(name)

    def has_device(self, name: str) -> bool:
        key = name.lower()
        return any(dev.name.lower() == key for dev in self.devices)


def _terminals(dev: Device) -> tuple[str, ...]:
    if isinstance(dev, Mosfet):
        return (dev.drain, dev.gate, dev.source, dev.bulk)
    if isinstance(dev, VoltageSource):
        return (dev.plus, dev.minus)
    return (dev.a, dev.b)


def _validate(circuit: Circuit) -> None:
    names = set()
    for dev in circuit.devices:
        key = dev.name.lower()
        if key in names:
            raise NetlistSemanticError(f"duplicate device name {dev.name!r}")
        names.add(key)
        if isinstance(dev, Mosfet):
            if dev.model not in circuit.model_cards:
                raise NetlistSemanticError(
                    f"unknown model {dev.model!r} for device {dev.name!r}"
                )
            if dev.w <= 0 or dev.l <= 0:
                raise NetlistSemanticError(
                    f"non-positive geometry on {dev.name!r} (W={dev.w}, L={dev.l})"
                )
        elif isinstance(dev, Resistor):
            if dev.ohms <= 0:
                raise NetlistSemanticError(f"non-positive resistance on {dev.name!r}")
        elif isinstance(dev, Capacitor):
            if dev.farads < 0:
                raise NetlistSemanticError(f"negative capacitance on {dev.name!r}")


def canonical_node(token: str) -> str:
    node = token.lower()
    return "0" if node == "gnd" else node


_IDENT_RE = re.compile(r"^[a-z0-9_][a-z0-9_.\-]*$", re.IGNORECASE)


class _Parser:
    def __init__(self, text: str):
        self.lines = self._join_continuations(text)

    @staticmethod
    def _join_continuations(text: str) -> list[tuple[int, str]]:
        """Logical lines tagged with their first physical line number."""
        logical: list[tuple[int, str]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("*"):
                continue
            if stripped.startswith("+"):
                if not logical:
                    raise NetlistSyntaxError(lineno, 1, "continuation without a previous line")
                first, body = logical[-1]
                logical[-1] = (first, body + " " + stripped[1:].strip())
            else:
                logical.append((lineno, stripped))
        return logical

    def parse(self) -> Circuit:
        devices: list[Device] = []
        cards: dict[str, ModelCard] = {}
        ambient = T_NOM
        saw_end = False
        for lineno, line in self.lines:
            if saw_end:
                raise NetlistSyntaxError(lineno, 1, "statement after .END")
            upper = line.upper()
            if upper.startswith("."):
                if upper == ".END":
                    saw_end = True
                elif upper.startswith(".MODEL"):
                    name, card = self._parse_model(lineno, line)
                    if name in cards:
                        raise NetlistSemanticError(f"duplicate model {name!r}")
                    cards[name] = card
                elif upper.startswith(".TEMP"):
                    ambient = 273.15 + self._parse_temp(lineno, line)
                else:
                    raise NetlistSemanticError(
                        f"line {lineno}: unsupported card {line.split()[0]!r}"
                    )
                continue
            kind = upper[0]
            if kind == "M":
                devices.append(self._parse_mosfet(lineno, line))
            elif kind == "R":
                devices.append(self._parse_two_terminal(lineno, line, Resistor))
            elif kind == "C":
                devices.append(self._parse_two_terminal(lineno, line, Capacitor))
            elif kind == "V":
                devices.append(self._parse_vsource(lineno, line))
            else:
                raise NetlistSyntaxError(lineno, 1, f"unknown statement {line.split()[0]!r}")
        if not saw_end:
            last = self.lines[-1][0] if self.lines else 1
            raise NetlistSyntaxError(last, 1, "missing .END")
        return Circuit(tuple(devices), cards, ambient)

    # statement parsers ------------------------------------------------

    def _tokens(self, line: str) -> list[str]:
        return line.split()

    def _number(self, lineno: int, line: str, token: str) -> float:
        try:
            return parse_si(token)
        except ValueError:
            col = line.find(token) + 1
            raise NetlistSyntaxError(lineno, col, f"bad number {token!r}") from None

    def _node(self, lineno: int, line: str, token: str) -> str:
        node = canonical_node(token)
        if not _IDENT_RE.match(node):
            col = line.find(token) + 1
            raise NetlistSyntaxError(lineno, col, f"bad node name {token!r}")
        return node

    def _parse_mosfet(self, lineno: int, line: str) -> Mosfet:
        toks = self._tokens(line)
        if len(toks) != 8:
            raise NetlistSyntaxError(
                lineno, 1, "MOSFET needs: M<name> d g s b model W=<v> L=<v>"
            )
        name = toks[0]
        d, g, s, b = (self._node(lineno, line, t) for t in toks[1:5])
        model = toks[5].upper()
        geom = {}
        for tok in toks[6:8]:
            if "=" not in tok:
                raise NetlistSyntaxError(lineno, line.find(tok) + 1, f"expected K=V, got {tok!r}")
            key, _, val = tok.partition("=")
            key = key.upper()
            if key not in ("W", "L"):
                raise NetlistSyntaxError(lineno, line.find(tok) + 1, f"unknown MOSFET parameter {key!r}")
            geom[key] = self._number(lineno, line, val)
        if set(geom) != {"W", "L"}:
            raise NetlistSyntaxError(lineno, 1, "MOSFET needs both W= and L=")
        return Mosfet(name, d, g, s, b, model, geom["W"], geom["L"])

    def _parse_two_terminal(self, lineno: int, line: str, cls):
        toks = self._tokens(line)
        if len(toks) != 4:
            kind = "resistor" if cls is Resistor else "capacitor"
            raise NetlistSyntaxError(lineno, 1, f"{kind} needs: name n1 n2 value")
        a = self._node(lineno, line, toks[1])
        b = self._node(lineno, line, toks[2])
        return cls(toks[0], a, b, self._number(lineno, line, toks[3]))

    def _parse_vsource(self, lineno: int, line: str) -> VoltageSource:
        toks = self._tokens(line)
        if len(toks) < 5 or toks[3].upper() != "DC":
            raise NetlistSyntaxError(lineno, 1, "source needs: V<name> n+ n- DC <volts> ...")
        name = toks[0]
        plus = self._node(lineno, line, toks[1])
        minus = self._node(lineno, line, toks[2])
        dc = self._number(lineno, line, toks[4])
        rest = toks[5:]
        pwl: tuple[tuple[float, float], ...] = ()
        ac = 0.0
        i = 0
        while i < len(rest):
            word = rest[i].upper()
            if word.startswith("PWL"):
                blob = " ".join(rest[i:])
                open_idx = blob.find("(")
                close_idx = blob.rfind(")")
                if open_idx < 0 or close_idx < open_idx:
                    raise NetlistSyntaxError(lineno, line.find(rest[i]) + 1, "unterminated PWL(...)")
                inner = blob[open_idx + 1 : close_idx].split()
                if len(inner) < 2 or len(inner) % 2:
                    raise NetlistSyntaxError(lineno, 1, "PWL needs t/v pairs")
                vals = [self._number(lineno, line, t) for t in inner]
                pairs = tuple(zip(vals[0::2], vals[1::2]))
                for (t0, _), (t1, _) in zip(pairs, pairs[1:]):
                    if t1 < t0:
                        raise NetlistSemanticError(
                            f"line {lineno}: PWL times must be non-decreasing"
                        )
                pwl = pairs
                tail = blob[close_idx + 1 :].split()
                rest = rest[:i] + tail
                continue
            if word == "AC":
                if i + 1 >= len(rest):
                    raise NetlistSyntaxError(lineno, 1, "AC needs a magnitude")
                ac = self._number(lineno, line, rest[i + 1])
                i += 2
                continue
            raise NetlistSyntaxError(lineno, line.find(rest[i]) + 1, f"unexpected token {rest[i]!r}")
        return VoltageSource(name, plus, minus, Waveform(dc, pwl, ac))

    _MODEL_KEYS = ("VTO", "KP", "LAMBDA", "TCV", "BEX", "CGS", "CGD")

    def _parse_model(self, lineno: int, line: str):
        m = re.match(r"\.MODEL\s+(\S+)\s+(NMOS|PMOS)\s*\((.*)\)\s*$", line, re.IGNORECASE)
        if m is None:
            raise NetlistSyntaxError(lineno, 1, ".MODEL needs: .MODEL name NMOS|PMOS ( K=V ... )")
        name = m.group(1).upper()
        polarity = "N" if m.group(2).upper() == "NMOS" else "P"
        params = {}
        for tok in m.group(3).split():
            if "=" not in tok:
                raise NetlistSyntaxError(lineno, line.find(tok) + 1, f"expected K=V, got {tok!r}")
            key, _, val = tok.partition("=")
            key = key.upper()
            if key not in self._MODEL_KEYS:
                raise NetlistSyntaxError(lineno, line.find(tok) + 1, f"unknown model parameter {key!r}")
            params[key] = self._number(lineno, line, val)
        missing = [k for k in self._MODEL_KEYS if k not in params]
        if missing:
            raise NetlistSyntaxError(lineno, 1, f".MODEL missing {', '.join(missing)}")
        try:
            return name, ModelCard(
                name=name,
                polarity=polarity,
                vth0=params["VTO"],
                kp=params["KP"],
                lam=params["LAMBDA"],
                tcv=params["TCV"],
                bex=params["BEX"],
                cgs=params["CGS"],
                cgd=params["CGD"],
            )
        except ValueError as exc:
            raise NetlistSemanticError(f"line {lineno}: {exc}") from None

    def _parse_temp(self, lineno: int, line: str) -> float:
        toks = self._tokens(line)
        if len(toks) != 2:
            raise NetlistSyntaxError(lineno, 1, ".TEMP needs one value (celsius)")
        return self._number(lineno, line, toks[1])


def parse_netlist(text: str) -> Circuit:
    """Parse netlist text into a validated Circuit.

    Raises NetlistSyntaxError (with line/column) on malformed statements
    and NetlistSemanticError on rule violations; never anything else.
    """
    return _Parser(text).parse()


def serialize_netlist(circuit: Circuit) -> str:
    """Emit text that parses back to a structurally equal circuit."""
    out: list[str] = []
    for name in sorted(circuit.model_cards):
        c = circuit.model_cards[name]
        kind = "NMOS" if c.polarity == "N" else "PMOS"
        out.append(
            f".MODEL {name} {kind} ( VTO={format_si(c.vth0)} KP={format_si(c.kp)}"
            f" LAMBDA={format_si(c.lam)} TCV={format_si(c.tcv)} BEX={format_si(c.bex)}"
            f" CGS={format_si(c.cgs)} CGD={format_si(c.cgd)} )"
        )
    if circuit.ambient_temperature != T_NOM:
        # 12 significant digits kill the kelvin<->celsius rounding noise
        out.append(f".TEMP {circuit.ambient_temperature - 273.15:.12g}")
    for dev in circuit.devices:
        if isinstance(dev, Mosfet):
            out.append(
                f"{dev.name} {dev.drain} {dev.gate} {dev.source} {dev.bulk}"
                f" {dev.model} W={format_si(dev.w)} L={format_si(dev.l)}"
            )
        elif isinstance(dev, Resistor):
            out.append(f"{dev.name} {dev.a} {dev.b} {format_si(dev.ohms)}")
        elif isinstance(dev, Capacitor):
            out.append(f"{dev.name} {dev.a} {dev.b} {format_si(dev.farads)}")
        elif isinstance(dev, VoltageSource):
            w = dev.waveform
            parts = [f"{dev.name} {dev.plus} {dev.minus} DC {format_si(w.dc)}"]
            if w.pwl:
                pts = " ".join(f"{format_si(t)} {format_si(v)}" for t, v in w.pwl)
                parts.append(f"PWL( {pts} )")
            if w.ac_mag:
                parts.append(f"AC {format_si(w.ac_mag)}")
            out.append(" ".join(parts))
    out.append(".END")
    return "\n".join(out) + "\n"
