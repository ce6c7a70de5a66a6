"""Posit(8,2) approximate-multiplier MAC modelling, error evaluation and QAT."""

__version__ = "0.1.0"
