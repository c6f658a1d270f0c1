"""Circuit analyses: Newton-Raphson DC, trapezoidal transient, small-signal AC.

Everything is modified nodal analysis over a dense system: node voltages
plus one current unknown per voltage source.  Circuits here stay tiny
(well under 50 nodes), so a dense LU solve per Newton step is the whole
linear-algebra story.  A permanent femto-siemens conductance from every
node to ground keeps otherwise-floating nodes (pure capacitor cuts,
fuzzed netlists) solvable while staying far below every stated solution
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .devices import ModelCard, mosfet_current
from .errors import ConvergenceError, DomainError, SingularMatrixError, StepSizeError
from .netlist import Capacitor, Circuit, Mosfet, Resistor, VoltageSource, Waveform

GMIN_FLOOR = 1e-15  # S, node-to-ground; perturbs kilohm circuits < 1e-12 relative
V_STEP_LIMIT = 0.3  # V, Newton update damping
VTOL = 1e-6  # V
ITOL = 1e-9  # A (and V for source rows)
MAX_ITER = 100
GMIN_LADDER = [10.0 ** -e for e in range(3, 13)]  # 1e-3 .. 1e-12 S
SOURCE_STEPS = 10


@dataclass(frozen=True)
class OperatingPoint:
    """Solved DC point: node voltages and per-device branch currents."""

    node_voltages: dict[str, float]
    branch_currents: dict[str, float]
    temperature: float
    newton_iterations: int


@dataclass
class TransientTrace:
    """Fixed-step transient result with per-device current series."""

    times: np.ndarray
    node_voltages: dict[str, np.ndarray]
    branch_currents: dict[str, np.ndarray]
    temperature: float
    dt: float
    probes: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class AcSample:
    frequency: float
    transfer_magnitude: float  # |V(out)| / injected magnitude
    output_phasor: complex
    input_magnitude: float


class _Compiled:
    """Circuit lowered to integer node indices for fast stamping."""

    def __init__(self, circuit: Circuit, temperature: float):
        self.circuit = circuit
        self.temperature = float(temperature)
        order = [n for n in circuit.nodes if n != "0"]
        self.node_names = order
        self.index = {n: i for i, n in enumerate(order)}
        self.index["0"] = -1
        self.n_nodes = len(order)
        self.resistors = []  # (name, a, b, g)
        self.fets = []  # (name, d, g, s, card, w/l, sign) sign=+1 N, -1 P
        self.caps = []  # (name_or_None, a, b, C); device caps have name None
        self.sources = []  # (name, p, n, waveform)
        for dev in circuit.devices:
            if isinstance(dev, Resistor):
                a, b = self.index[dev.a], self.index[dev.b]
                if a != b:
                    self.resistors.append((dev.name, a, b, 1.0 / dev.ohms))
            elif isinstance(dev, Capacitor):
                a, b = self.index[dev.a], self.index[dev.b]
                if a != b and dev.farads > 0.0:
                    self.caps.append((dev.name, a, b, dev.farads))
            elif isinstance(dev, VoltageSource):
                self.sources.append(
                    (dev.name, self.index[dev.plus], self.index[dev.minus], dev.waveform)
                )
            elif isinstance(dev, Mosfet):
                card = circuit.model_cards[dev.model]
                d, g, s = self.index[dev.drain], self.index[dev.gate], self.index[dev.source]
                self.fets.append((dev.name, d, g, s, card, dev.w / dev.l))
                if card.cgs > 0.0 and g != s:
                    self.caps.append((None, g, s, card.cgs))
                if card.cgd > 0.0 and g != d:
                    self.caps.append((None, g, d, card.cgd))
        self.n_src = len(self.sources)
        self.size = self.n_nodes + self.n_src

    # ---- assembly ----------------------------------------------------

    def _v(self, x: np.ndarray, idx: int) -> float:
        return 0.0 if idx < 0 else x[idx]

    def assemble(self, x, src_values, gmin_extra=0.0, companions=None):
        """Residual and Jacobian of the MNA system at state x.

        companions: optional (geq, ieq) arrays over self.caps for the
        trapezoidal transient step; absent at DC (capacitors open).
        """
        N = self.size
        F = np.zeros(N)
        J = np.zeros((N, N))
        gfloor = GMIN_FLOOR + gmin_extra
        for i in range(self.n_nodes):
            F[i] += gfloor * x[i]
            J[i, i] += gfloor

        for _, a, b, g in self.resistors:
            va, vb = self._v(x, a), self._v(x, b)
            i = g * (va - vb)
            if a >= 0:
                F[a] += i
                J[a, a] += g
                if b >= 0:
                    J[a, b] -= g
            if b >= 0:
                F[b] -= i
                J[b, b] += g
                if a >= 0:
                    J[b, a] -= g

        for name, d, g_, s, card, wol in self.fets:
            vd, vg, vs = self._v(x, d), self._v(x, g_), self._v(x, s)
            # i is the current leaving the drain node through the channel.
            # Polarity normalization keeps one stamp shape: for P devices
            # the core sees (vsg, vsd) and the physical current enters the
            # drain, so only the current sign flips; the partials map to
            # the same (gds, gm, -gm-gds) triple by the chain rule.
            if card.polarity == "N":
                i, gm, gds = mosfet_current(card, vg - vs, vd - vs, self.temperature, wol)
            else:
                i, gm, gds = mosfet_current(card, vs - vg, vs - vd, self.temperature, wol)
                i = -i
            di_dd, di_dg, di_ds = gds, gm, -gm - gds
            if d >= 0:
                F[d] += i
                J[d, d] += di_dd
                if g_ >= 0:
                    J[d, g_] += di_dg
                if s >= 0:
                    J[d, s] += di_ds
            if s >= 0:
                F[s] -= i
                J[s, s] -= di_ds
                if g_ >= 0:
                    J[s, g_] -= di_dg
                if d >= 0:
                    J[s, d] -= di_dd

        if companions is not None:
            geq, ieq = companions
            for k, (_, a, b, _c) in enumerate(self.caps):
                g = geq[k]
                i = g * (self._v(x, a) - self._v(x, b)) - ieq[k]
                if a >= 0:
                    F[a] += i
                    J[a, a] += g
                    if b >= 0:
                        J[a, b] -= g
                if b >= 0:
                    F[b] -= i
                    J[b, b] += g
                    if a >= 0:
                        J[b, a] -= g

        for k, (_, p, n, _wf) in enumerate(self.sources):
            row = self.n_nodes + k
            ik = x[row]
            if p >= 0:
                F[p] += ik
                J[p, row] += 1.0
                J[row, p] += 1.0
            if n >= 0:
                F[n] -= ik
                J[n, row] -= 1.0
                J[row, n] -= 1.0
            F[row] = self._v(x, p) - self._v(x, n) - src_values[k]
        return F, J

    # ---- Newton ------------------------------------------------------

    def newton(self, x0, src_values, gmin_extra=0.0, companions=None,
               max_iter=MAX_ITER):
        """Damped Newton iteration. Returns (x, iterations) or raises."""
        x = x0.copy()
        if self.size == 0:
            return x, 0
        for it in range(1, max_iter + 1):
            F, J = self.assemble(x, src_values, gmin_extra, companions)
            try:
                dx = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError as exc:
                raise SingularMatrixError(str(exc)) from None
            if not np.all(np.isfinite(dx)):
                raise SingularMatrixError("non-finite Newton update")
            vmax = np.max(np.abs(dx[: self.n_nodes])) if self.n_nodes else 0.0
            if vmax > V_STEP_LIMIT:
                dx *= V_STEP_LIMIT / vmax
                vmax = V_STEP_LIMIT
            x += dx
            if vmax < VTOL:
                F, _ = self.assemble(x, src_values, gmin_extra, companions)
                if np.max(np.abs(F)) < ITOL:
                    return x, it
        F, _ = self.assemble(x, src_values, gmin_extra, companions)
        raise ConvergenceError(max_iter, float(np.max(np.abs(F))))

    def solve_dc(self, src_values, x0=None):
        """Plain Newton, then gmin stepping, then source stepping."""
        x0 = np.zeros(self.size) if x0 is None else x0
        try:
            return self.newton(x0, src_values)
        except (ConvergenceError, SingularMatrixError):
            pass
        x = x0.copy()
        try:
            for g in GMIN_LADDER:
                x, _ = self.newton(x, src_values, gmin_extra=g, max_iter=60)
            return self.newton(x, src_values)
        except (ConvergenceError, SingularMatrixError):
            pass
        x = np.zeros(self.size)
        try:
            total = 0
            for k in range(1, SOURCE_STEPS + 1):
                scaled = [v * k / SOURCE_STEPS for v in src_values]
                x, its = self.newton(x, scaled, max_iter=60)
                total += its
            return x, total
        except (ConvergenceError, SingularMatrixError) as exc:
            if isinstance(exc, ConvergenceError):
                raise ConvergenceError(exc.iterations, exc.residual,
                                       "gmin and source stepping exhausted") from None
            raise ConvergenceError(MAX_ITER, math.inf,
                                   "gmin and source stepping exhausted") from None

    # ---- extraction ----------------------------------------------------

    def node_voltage_map(self, x) -> dict[str, float]:
        out = {"0": 0.0}
        for name, i in ((n, self.index[n]) for n in self.node_names):
            out[name] = float(x[i])
        return out

    def branch_current_map(self, x, companions=None) -> dict[str, float]:
        """Per-device currents.  MOSFET entries are channel currents,
        positive in the conduction direction for either polarity; source
        entries are the MNA unknown (current into the + terminal)."""
        out: dict[str, float] = {}
        for name, a, b, g in self.resistors:
            out[name] = g * (self._v(x, a) - self._v(x, b))
        for name, d, g_, s, card, wol in self.fets:
            if card.polarity == "N":
                i, _, _ = mosfet_current(card, self._v(x, g_) - self._v(x, s),
                                         self._v(x, d) - self._v(x, s),
                                         self.temperature, wol)
            else:
                i, _, _ = mosfet_current(card, self._v(x, s) - self._v(x, g_),
                                         self._v(x, s) - self._v(x, d),
                                         self.temperature, wol)
            out[name] = i
        for k, (name, a, b, _c) in enumerate(self.caps):
            if name is None:
                continue
            if companions is None:
                out[name] = 0.0
            else:
                geq, ieq = companions
                out[name] = geq[k] * (self._v(x, a) - self._v(x, b)) - ieq[k]
        for k, (name, _p, _n, _wf) in enumerate(self.sources):
            out[name] = float(x[self.n_nodes + k])
        return out

    def source_dc_values(self, t: float | None = None) -> list[float]:
        if t is None:
            return [wf.value(0.0) if wf.pwl else wf.dc for _, _, _, wf in self.sources]
        return [wf.value(t) for _, _, _, wf in self.sources]


def _resolve_temperature(circuit: Circuit, temperature: float | None) -> float:
    return circuit.ambient_temperature if temperature is None else float(temperature)


def dc_operating_point(circuit: Circuit, temperature: float | None = None) -> OperatingPoint:
    """Newton DC solution with gmin/source-stepping fallbacks.

    Converged solutions satisfy max |dV| < 1 uV and every non-ground KCL
    residual < 1 nA; identical inputs give bit-identical results.
    """
    temp = _resolve_temperature(circuit, temperature)
    comp = _Compiled(circuit, temp)
    x, iters = comp.solve_dc(comp.source_dc_values())
    return OperatingPoint(
        node_voltages=comp.node_voltage_map(x),
        branch_currents=comp.branch_current_map(x),
        temperature=temp,
        newton_iterations=iters,
    )


def dc_sweep(circuit: Circuit, knob: str, grid, temperature: float | None = None):
    """DC solve per grid point with continuation (previous point seeds the next).

    knob is either a voltage-source name or the literal "temperature"
    (grid then lists kelvins).  Returns [(knob_value, OperatingPoint), ...].
    """
    results = []
    grid = list(grid)
    if knob.lower() in ("temperature", "temp"):
        x = None
        for tk in grid:
            comp = _Compiled(circuit, tk)
            try:
                x, iters = comp.solve_dc(comp.source_dc_values(), x0=x)
            except ConvergenceError as exc:
                raise ConvergenceError(exc.iterations, exc.residual,
                                       f"temperature sweep at {tk} K") from None
            results.append((tk, OperatingPoint(comp.node_voltage_map(x),
                                               comp.branch_current_map(x), tk, iters)))
        return results

    temp = _resolve_temperature(circuit, temperature)
    comp = _Compiled(circuit, temp)
    try:
        k_src = next(i for i, (name, *_rest) in enumerate(comp.sources)
                     if name.lower() == knob.lower())
    except StopIteration:
        raise KeyError(f"no source named {knob!r}") from None
    base = comp.source_dc_values()
    x = None
    for val in grid:
        vals = list(base)
        vals[k_src] = val
        try:
            x, iters = comp.solve_dc(vals, x0=x)
        except ConvergenceError as exc:
            raise ConvergenceError(exc.iterations, exc.residual,
                                   f"sweep {knob}={val}") from None
        results.append((val, OperatingPoint(comp.node_voltage_map(x),
                                            comp.branch_current_map(x), temp, iters)))
    return results


def transient(circuit: Circuit, t_stop: float, dt: float,
              temperature: float | None = None) -> TransientTrace:
    """Fixed-step trapezoidal integration from the t=0 operating point."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_stop < dt:
        raise ValueError("t_stop must be at least dt")
    temp = _resolve_temperature(circuit, temperature)
    comp = _Compiled(circuit, temp)
    for _, _, _, wf in comp.sources:
        seg = wf.min_segment()
        if seg is not None and dt > seg:
            raise StepSizeError(
                f"dt={dt:g}s exceeds shortest source segment {seg:g}s; edges would be skipped"
            )

    n_steps = int(round(t_stop / dt))
    times = np.arange(n_steps + 1) * dt
    x, _ = comp.solve_dc(comp.source_dc_values(0.0))

    n_caps = len(comp.caps)
    cap_v = np.array([comp._v(x, a) - comp._v(x, b) for _, a, b, _c in comp.caps])
    cap_i = np.zeros(n_caps)
    cvals = np.array([c for _, _, _, c in comp.caps]) if n_caps else np.zeros(0)

    volts = {n: np.empty(n_steps + 1) for n in comp.node_names}
    volts["0"] = np.zeros(n_steps + 1)
    currents = {}
    dev_names = ([r[0] for r in comp.resistors]
                 + [f[0] for f in comp.fets]
                 + [c[0] for c in comp.caps if c[0] is not None]
                 + [s[0] for s in comp.sources])
    for name in dev_names:
        currents[name] = np.empty(n_steps + 1)

    def record(k, xk, companions):
        for n, idx in ((nm, comp.index[nm]) for nm in comp.node_names):
            volts[n][k] = xk[idx]
        for name, val in comp.branch_current_map(xk, companions).items():
            currents[name][k] = val

    record(0, x, None)

    geq = (2.0 * cvals / dt) if n_caps else np.zeros(0)
    for k in range(1, n_steps + 1):
        t = times[k]
        ieq = geq * cap_v + cap_i
        vals = comp.source_dc_values(t)
        try:
            x, _ = comp.newton(x, vals, companions=(geq, ieq))
        except (ConvergenceError, SingularMatrixError):
            try:
                xg = x.copy()
                for g in GMIN_LADDER:
                    xg, _ = comp.newton(xg, vals, gmin_extra=g,
                                        companions=(geq, ieq), max_iter=60)
                x, _ = comp.newton(xg, vals, companions=(geq, ieq))
            except (ConvergenceError, SingularMatrixError) as exc:
                res = exc.residual if isinstance(exc, ConvergenceError) else math.inf
                raise ConvergenceError(MAX_ITER, res, f"transient step {k} (t={t:g}s)") from None
        new_v = np.array([comp._v(x, a) - comp._v(x, b) for _, a, b, _c in comp.caps])
        cap_i = geq * (new_v - cap_v) - cap_i
        cap_v = new_v
        record(k, x, (geq, geq * cap_v - cap_i))

    return TransientTrace(times=times, node_voltages=volts,
                          branch_currents=currents, temperature=temp, dt=dt)


def ac_analysis(circuit: Circuit, op: OperatingPoint, frequencies,
                input_source: str, output_node: str) -> list[AcSample]:
    """Linearized complex sweep; magnitudes are |V(output)| / injected mag."""
    comp = _Compiled(circuit, op.temperature)
    x = np.zeros(comp.size)
    for name, idx in comp.index.items():
        if idx >= 0:
            x[idx] = op.node_voltages[name]
    for k, (name, _p, _n, _wf) in enumerate(comp.sources):
        x[comp.n_nodes + k] = op.branch_currents.get(name, 0.0)

    src_mags = [wf.ac_mag for _, _, _, wf in comp.sources]
    try:
        k_in = next(i for i, (name, *_r) in enumerate(comp.sources)
                    if name.lower() == input_source.lower())
    except StopIteration:
        raise KeyError(f"no source named {input_source!r}") from None
    mag_in = src_mags[k_in]
    if mag_in <= 0.0:
        raise DomainError(f"source {input_source!r} carries no AC magnitude")
    out_idx = comp.index.get(output_node.lower())
    if out_idx is None:
        raise KeyError(f"no node named {output_node!r}")

    _, G = comp.assemble(x, comp.source_dc_values())
    C = np.zeros((comp.size, comp.size))
    for _, a, b, c in comp.caps:
        if a >= 0:
            C[a, a] += c
            if b >= 0:
                C[a, b] -= c
        if b >= 0:
            C[b, b] += c
            if a >= 0:
                C[b, a] -= c

    rhs = np.zeros(comp.size, dtype=complex)
    for k, m in enumerate(src_mags):
        rhs[comp.n_nodes + k] = m

    samples = []
    for f in frequencies:
        if f <= 0:
            raise DomainError("frequencies must be positive")
        Y = G + 2j * math.pi * f * C
        try:
            sol = np.linalg.solve(Y, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"AC solve at {f:g} Hz: {exc}") from None
        vout = complex(sol[out_idx]) if out_idx >= 0 else 0j
        samples.append(AcSample(frequency=float(f),
                                transfer_magnitude=abs(vout) / mag_in,
                                output_phasor=vout,
                                input_magnitude=mag_in))
    return samples


def kcl_residual(circuit: Circuit, op: OperatingPoint) -> float:
    """Largest non-ground KCL residual of a solved DC point (amps)."""
    comp = _Compiled(circuit, op.temperature)
    x = np.zeros(comp.size)
    for name, idx in comp.index.items():
        if idx >= 0:
            x[idx] = op.node_voltages[name]
    for k, (name, *_r) in enumerate(comp.sources):
        x[comp.n_nodes + k] = op.branch_currents[name]
    F, _ = comp.assemble(x, comp.source_dc_values())
    return float(np.max(np.abs(F[: comp.n_nodes]))) if comp.n_nodes else 0.0


def export_trace_csv(trace: TransientTrace, path, probe_names=None) -> None:
    """Write `time_s,temp_c,<probe>...` rows with 17-significant-digit floats."""
    names = list(probe_names) if probe_names else list(trace.probes)
    cols = [trace.probes[n] for n in names]
    temp_c = trace.temperature - 273.15
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["time_s", "temp_c"] + names) + "\n")
        for i, t in enumerate(trace.times):
            row = [f"{t:.17g}", f"{temp_c:.17g}"] + [f"{c[i]:.17g}" for c in cols]
            fh.write(",".join(row) + "\n")
