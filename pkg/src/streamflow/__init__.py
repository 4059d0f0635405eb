"""Adaptive scheduling and simulation of dynamic stream workflows on multiple clouds."""

__version__ = "0.1.0"
