"""Model-based and learned symbol detectors for finite-memory and MIMO channels."""

__version__ = "0.1.0"
