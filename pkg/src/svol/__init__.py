"""Sketch-queried video object localisation on a numpy autodiff kernel."""
__version__ = "0.1.0"
