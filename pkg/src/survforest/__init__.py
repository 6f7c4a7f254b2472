"""Random survival forests with tabular diagnostics for plotting."""

__version__ = "0.1.0"
