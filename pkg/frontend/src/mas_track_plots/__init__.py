"""Offline panel renderer for tracking-simulation trace CSVs."""

from .panels import PANELS, PanelError, PlotRequest, read_trace, render

__all__ = ["PANELS", "PanelError", "PlotRequest", "read_trace", "render"]
