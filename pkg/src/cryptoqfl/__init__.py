"""Quantum federated learning on QOTP-encrypted ternary gradients, simulated at desk scale."""

__version__ = "0.1.0"
