"""Render tracking/estimation panels from an exported trace CSV.

This tool is decoupled from the simulator: it consumes only the CSV layout
(t, leader states, per-follower blocks, error norms) and produces one image
per requested panel.  First-order traces have no velocity columns, so
velocity panels are rejected with an error naming the missing column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

LEADER_STYLE = dict(color="black", linewidth=2.0, linestyle="--")

# panel name -> (y label, leader column or None, follower column prefix,
#                optional truth prefix plotted dashed per follower)
_SERIES_PANELS = {
    "positions": ("position", "x0", "x_", None),
    "velocities": ("velocity", "v0", "v_", None),
    "u0_estimates": ("leader input estimate", None, "uhat0_", None),
    "v0_estimates": ("leader velocity estimate", "v0", "vhat0_", None),
    "f0_estimates": ("leader disturbance estimate", None, "fhat0_", None),
    "own_velocity_estimates": ("velocity estimate", None, "vhat_", "v_"),
    "own_disturbance_estimates": ("disturbance estimate", None, "fhat_", None),
}

PANELS = tuple(_SERIES_PANELS) + ("error_norms",)

_ERROR_COLUMNS = ("err_pos_norm", "err_vel_norm", "err_u_norm", "err_f0_norm", "err_f_norm")


class PanelError(ValueError):
    """A requested panel cannot be built from the CSV's columns."""


@dataclass(frozen=True)
class PlotRequest:
    trace_csv_path: str
    panels: tuple
    out_dir: str
    image_format: str = "png"

    def __post_init__(self):
        unknown = [p for p in self.panels if p not in PANELS]
        if unknown:
            raise PanelError(f"unknown panels {unknown}; available: {', '.join(PANELS)}")


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    columns: tuple
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def follower_columns(self, prefix: str) -> list:
        pattern = re.compile(re.escape(prefix) + r"(\d+)$")
        found = [(int(m.group(1)), c) for c in self.columns if (m := pattern.match(c))]
        return [c for _, c in sorted(found)]


def read_trace(path) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.strip().split(",")]
                for line in fh if line.strip()]
    if not rows or header[0] != "t":
        raise PanelError(f"{path}: not a trace CSV (expected a 't' column header)")
    data = np.array(rows)
    return Trace(times=data[:, 0], columns=tuple(header[1:]), data=data[:, 1:])


def _agent_index(column: str) -> str:
    return column.rsplit("_", 1)[1]


def _render_series_panel(trace: Trace, panel: str, path: Path) -> None:
    ylabel, leader_col, prefix, truth_prefix = _SERIES_PANELS[panel]
    follower_cols = trace.follower_columns(prefix)
    if not follower_cols:
        raise PanelError(f"panel {panel!r}: trace has no {prefix}* columns")
    if leader_col is not None and leader_col not in trace.columns:
        raise PanelError(f"panel {panel!r}: trace has no {leader_col!r} column")
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=110)
    if leader_col is not None:
        ax.plot(trace.times, trace.column(leader_col), label="leader", **LEADER_STYLE)
    for col in follower_cols:
        ax.plot(trace.times, trace.column(col), linewidth=1.2,
                label=f"follower {_agent_index(col)}")
        if truth_prefix is not None:
            truth_col = truth_prefix + _agent_index(col)
            if truth_col in trace.columns:
                ax.plot(trace.times, trace.column(truth_col), linewidth=0.8,
                        linestyle=":", color=ax.lines[-1].get_color())
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "mas-track-plots"})
    plt.close(fig)


def _render_error_norms(trace: Trace, path: Path) -> None:
    present = [c for c in _ERROR_COLUMNS if c in trace.columns]
    if not present:
        raise PanelError("panel 'error_norms': trace has no err_* columns")
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=110)
    for col in present:
        ax.semilogy(trace.times, np.maximum(trace.column(col), 1e-16),
                    linewidth=1.2, label=col)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("error norm")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "mas-track-plots"})
    plt.close(fig)


def render(request: PlotRequest) -> list:
    """Render every requested panel; returns the produced image paths, one per
    panel in request order.  Raises :class:`PanelError` before writing
    anything if some panel cannot be derived from the CSV."""
    trace = read_trace(request.trace_csv_path)
    out_dir = Path(request.out_dir)

    # validate every panel up front so a failing request produces no output
    for panel in request.panels:
        if panel == "error_norms":
            if not any(c in trace.columns for c in _ERROR_COLUMNS):
                raise PanelError("panel 'error_norms': trace has no err_* columns")
            continue
        ylabel, leader_col, prefix, _ = _SERIES_PANELS[panel]
        if not trace.follower_columns(prefix):
            raise PanelError(f"panel {panel!r}: trace has no {prefix}* columns")
        if leader_col is not None and leader_col not in trace.columns:
            raise PanelError(f"panel {panel!r}: trace has no {leader_col!r} column")

    if request.panels:
        out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    for panel in request.panels:
        path = out_dir / f"{panel}.{request.image_format}"
        if panel == "error_norms":
            _render_error_norms(trace, path)
        else:
            _render_series_panel(trace, panel, path)
        produced.append(str(path))
    return produced
