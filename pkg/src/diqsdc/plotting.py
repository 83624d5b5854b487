"""Static figures for the distance curves and Monte Carlo sweeps."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# keep SVG output byte-stable between runs
matplotlib.rcParams["svg.hashsalt"] = "diqsdc"
_METADATA = {"svg": {"Date": None}, "png": {"Software": None}}


def _save(fig, path: Path) -> None:
    fmt = path.suffix.lstrip(".")
    fig.savefig(path, metadata=_METADATA.get(fmt), bbox_inches="tight")
    plt.close(fig)


def _col(rows, name):
    return [r[name] for r in rows]


def plot_capacity(rows: Sequence[Mapping[str, float]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    L = _col(rows, "L_km")
    ax.plot(L, _col(rows, "Cs"), "-", color="tab:red", label="heralded, $C_s$")
    ax.plot(L, _col(rows, "Cs0"), "--", color="tab:blue", label="entangled source, $C_{s0}$")
    ax.set_xlabel("$L_{AB}$ (km)")
    ax.set_ylabel("secrecy message capacity")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_efficiency(rows: Sequence[Mapping[str, float]], path: Path, floor: float = -2.0) -> None:
    """log10 of secure qubits per second; zero-capacity points are clipped at ``floor``."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    L = _col(rows, "L_km")
    clip = lambda ys: [max(y, floor) if not math.isnan(y) else floor for y in ys]  # noqa: E731
    ax.plot(L, clip(_col(rows, "log10Es")), "-", color="tab:red", label="heralded, $E_s$")
    ax.plot(L, clip(_col(rows, "log10Es0")), "--", color="tab:blue", label="entangled source, $E_{s0}$")
    ax.set_xlabel("$L_{AB}$ (km)")
    ax.set_ylabel(r"$\log_{10}$ qubits/s")
    ax.set_ylim(bottom=floor)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_sweep(rows: Sequence[Mapping[str, float]], path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    L = _col(rows, "L_km")
    for key, color in (("S1", "tab:green"), ("S2", "tab:purple")):
        ax1.errorbar(L, _col(rows, f"{key}_hat"), yerr=_col(rows, f"{key}_se"), fmt="o",
                     color=color, ms=3, label=f"{key} estimate")
        ax1.plot(L, _col(rows, f"{key}_model"), "-", color=color, lw=1)
    ax1.axhline(2.0, color="k", lw=0.8, ls=":")
    ax1.set_xlabel("$L_{AB}$ (km)")
    ax1.set_ylabel("CHSH value")
    ax1.legend(frameon=False, fontsize=8)
    ax2.errorbar(L, _col(rows, "Qt_hat"), yerr=_col(rows, "Qt_se"), fmt="o", ms=3,
                 color="tab:orange", label="$Q_t$ estimate")
    ax2.plot(L, _col(rows, "Qt_model"), "-", color="tab:orange", lw=1)
    ax2.plot(L, _col(rows, "loss_rate"), "s", ms=3, color="tab:gray", label="message loss")
    ax2.plot(L, _col(rows, "loss_model"), "-", color="tab:gray", lw=1)
    ax2.set_xlabel("$L_{AB}$ (km)")
    ax2.set_ylabel("rate")
    ax2.legend(frameon=False, fontsize=8)
    _save(fig, path)
