"""Stochastic CRN workbench for molecular watchdog timers."""
__version__ = "0.1.0"
