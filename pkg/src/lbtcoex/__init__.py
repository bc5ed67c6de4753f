"""LBT coexistence toolkit: analytic access model and MAC simulator."""

__version__ = "0.1.0"
