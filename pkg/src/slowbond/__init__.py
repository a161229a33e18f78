"""Simulation and numerics for the exclusion process with a slow bond
in the moderate-deviation regime."""

__version__ = "0.1.0"
