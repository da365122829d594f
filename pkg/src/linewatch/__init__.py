"""Multi-UAV mission simulation and planning for power-line inspection."""

__version__ = "0.1.0"
