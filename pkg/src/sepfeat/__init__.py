"""Unsupervised feature scoring from ensembles of sparse max-margin separators."""

__version__ = "0.1.0"
