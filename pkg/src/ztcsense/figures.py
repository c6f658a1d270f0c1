"""Matplotlib rendering of report data to PNG files.

Every figure is drawn from the same arrays the CSV emitters write, with
pinned size, dpi and metadata so repeated runs produce byte-identical
files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def _new_axes(xlabel: str, ylabel: str, title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_trace(trace, report, path) -> None:
    """Current deviation over time with the decision threshold band."""
    fig, ax = _new_axes("time (ns)", "current deviation sigma",
                        f"adder deviation, verdict {report.verdict.value}")
    t_ns = trace.times * 1e9
    i_add = trace.probes["I_adder"]
    i_ref = i_add[0] if report.spike_magnitude == 0 else None
    sig = trace.probes.get("sigma")
    if sig is None:
        ref = i_ref if i_ref else i_add[0]
        sig = (i_add - ref) / ref
    ax.plot(t_ns, sig, lw=0.9, color="tab:blue")
    ax.axhline(report.threshold, color="tab:red", ls="--", lw=0.8)
    ax.axhline(-report.threshold, color="tab:red", ls="--", lw=0.8)
    _finish(fig, path)


def render_ztc(vgs, temps_k, currents, v_ztc, path) -> None:
    """Diode-current family over gate bias, one curve per temperature."""
    fig, ax = _new_axes("gate-source voltage (V)", "drain current (uA)",
                        "diode-connected sweep and ZTC point")
    for j, tk in enumerate(temps_k):
        ax.plot(vgs, np.asarray(currents)[:, j] * 1e6, lw=0.9,
                label=f"{tk - 273.15:.0f} C")
    ax.axvline(v_ztc, color="k", ls=":", lw=1.0)
    ax.legend(fontsize=7, ncol=2)
    _finish(fig, path)


def render_flatness(profile, path) -> None:
    """Branch and adder currents versus temperature."""
    fig, ax = _new_axes("temperature (C)", "current (uA)",
                        "calibrated sensing currents")
    for key, color in (("I_PTAT", "tab:orange"), ("I_CTAT", "tab:green"),
                       ("I_adder", "tab:blue")):
        ax.plot(profile["temp_c"], profile[key] * 1e6, lw=1.2,
                label=key, color=color)
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_pssr(points, path) -> None:
    fig, ax = _new_axes("frequency (Hz)", "PSSR (dB)", "supply ripple rejection")
    freqs = [f for f, _ in points]
    dbs = [db for _, db in points]
    ax.semilogx(freqs, dbs, lw=1.2, color="tab:blue")
    _finish(fig, path)


def render_corner_table(table, path) -> None:
    fig, ax = _new_axes("temperature (C)", "adder current change (%)",
                        "process corners vs TT at 27 C")
    for label, color in (("TT", "tab:blue"), ("FF", "tab:red"), ("SS", "tab:green")):
        ax.plot(table.temps_c, table.rows[label], marker="o", lw=1.1,
                label=label, color=color)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_trojan_table(table, path) -> None:
    fig, ax = _new_axes("temperature (C)", "adder current (uA)",
                        "Trojan states over temperature")
    for state, color in (("free", "tab:blue"), ("armed", "tab:green"),
                         ("triggered", "tab:red")):
        ax.plot(table.temps_c, [v * 1e6 for v in table.rows[state]],
                marker="o", lw=1.1, label=state, color=color)
    ax.legend(fontsize=8)
    _finish(fig, path)
