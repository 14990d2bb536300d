"""Sequential service restoration of faulted feeders with inverter microgrids."""

__version__ = "0.1.0"
