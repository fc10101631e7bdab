"""Statevector simulation and adversarial training for variational quantum domain adaptation."""

__version__ = "0.1.0"
