"""Figure rendering for graphsmc result tables."""

from .render import KINDS, PlotSpec, RenderResult, SchemaError, read_result_table, render

__version__ = "0.1.0"
