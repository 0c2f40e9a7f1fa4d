"""Simulation toolkit for beamforming with a single Rydberg vapor cell."""
__version__ = "0.1.0"
