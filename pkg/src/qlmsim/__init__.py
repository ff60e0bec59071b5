"""Trotterized quantum-link-model dynamics with marginal distribution error mitigation."""

__version__ = "0.1.0"
