"""Batch figure rendering for stap output directories."""

from .render import PlotBundle, render

__version__ = "0.1.0"
