"""Multi-fidelity entropy search for controller tuning."""

__version__ = "0.1.0"
