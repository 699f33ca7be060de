"""Tissue detection and evaluation toolkit for whole-slide images."""

__version__ = "0.1.0"
