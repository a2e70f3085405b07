"""Figure rendering for sweep curves and spectrum reports.

Figures are drawn on explicit Agg canvases so rendering stays
non-interactive and backend-independent; every renderer writes straight
to a file next to the delimited output it illustrates.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import SpectrumReport
from .risk_mc import RiskCurve
from .risk_theory import BoundConvention, TheoryCurve, TheoryRecord


def _finite_band(ax, ps, los, his, color, label):
    mask = np.isfinite(los) & np.isfinite(his)
    if np.any(mask):
        ax.fill_between(np.asarray(ps)[mask], np.asarray(los)[mask], np.asarray(his)[mask],
                        alpha=0.25, color=color, label=label)
        ax.plot(np.asarray(ps)[mask], np.asarray(los)[mask], color=color, lw=0.8)
        ax.plot(np.asarray(ps)[mask], np.asarray(his)[mask], color=color, lw=0.8)


def _style(ax, n: int, title: str, values) -> None:
    ax.axvline(n, color="gray", ls="--", lw=1, label=f"p = n = {n}")
    finite = [v for v in values if v is not None and math.isfinite(v) and v > 0]
    if finite:
        ax.set_yscale("log")
    ax.set_xlabel("subset size p")
    ax.set_ylabel("risk")
    ax.set_title(title)
    ax.legend(fontsize=8)


def _theory_panels(records: tuple[TheoryRecord, ...], convention: BoundConvention):
    ps = [r.p for r in records]
    risk = ([r.risk.lo for r in records], [r.risk.hi for r in records])
    ends = [r.ood_ends(convention) for r in records]
    ood = ([lo for lo, _ in ends], [hi for _, hi in ends])
    return ps, risk, ood


def theory_curve_figure(
    curve: TheoryCurve,
    convention: BoundConvention = BoundConvention.PROOF_CONSISTENT,
) -> Figure:
    """Two panels of closed-form bound bands over subset size."""
    fig = Figure(figsize=(9, 3.6))
    FigureCanvasAgg(fig)
    ax1, ax2 = fig.subplots(1, 2)
    ps, (rlo, rhi), (olo, ohi) = _theory_panels(curve.records, convention)
    _finite_band(ax1, ps, np.array(rlo), np.array(rhi), "tab:blue", "bound band")
    _style(ax1, curve.n, "in-distribution risk", rlo + rhi)
    _finite_band(ax2, ps, np.array(olo), np.array(ohi), "tab:orange", "bound band")
    _style(ax2, curve.n, f"shifted-task risk ({convention.value})", olo + ohi)
    fig.tight_layout()
    return fig


def risk_curve_figure(
    curve: RiskCurve,
    convention: BoundConvention = BoundConvention.PROOF_CONSISTENT,
) -> Figure:
    """Bound bands plus Monte Carlo estimates with error bars."""
    fig = Figure(figsize=(9, 3.6))
    FigureCanvasAgg(fig)
    ax1, ax2 = fig.subplots(1, 2)
    records = tuple(r.theory for r in curve.records)
    ps, (rlo, rhi), (olo, ohi) = _theory_panels(records, convention)
    _finite_band(ax1, ps, np.array(rlo), np.array(rhi), "tab:blue", "bound band")
    ax1.errorbar(ps, [r.mc_risk.mean for r in curve.records],
                 yerr=[r.mc_risk.std_error for r in curve.records],
                 fmt="o", ms=3, color="tab:red", label="Monte Carlo")
    _style(ax1, curve.n, "in-distribution risk", rlo + rhi)
    _finite_band(ax2, ps, np.array(olo), np.array(ohi), "tab:orange", "bound band")
    ax2.errorbar(ps, [r.mc_ood.mean for r in curve.records],
                 yerr=[r.mc_ood.std_error for r in curve.records],
                 fmt="o", ms=3, color="tab:red", label="Monte Carlo")
    _style(ax2, curve.n, f"shifted-task risk ({convention.value})", olo + ohi)
    fig.tight_layout()
    return fig


def spectrum_figure(report: SpectrumReport) -> Figure:
    """Explained-variance fractions by eigenvalue rank with a class marker."""
    fig = Figure(figsize=(5.5, 3.6))
    FigureCanvasAgg(fig)
    ax = fig.subplots()
    ranks = np.arange(1, len(report.explained_fraction) + 1)
    ax.plot(ranks, report.explained_fraction, "o-", ms=3, color="tab:blue")
    ax.axvline(report.marker_index, color="gray", ls="--", lw=1,
               label=f"rank = C = {report.marker_index}")
    ax.set_xlabel("eigenvalue rank")
    ax.set_ylabel("explained variance fraction")
    ax.set_title("feature covariance spectrum")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def save_figure(fig: Figure, path: str | Path) -> None:
    fig.savefig(Path(path), dpi=150)
