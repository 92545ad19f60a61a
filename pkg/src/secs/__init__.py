"""Surrogate crop-yield emulation toolkit: data model, synthetic forcing and
toy simulator, nested recurrent network, training, curve metrics, quantile
delta mapping and Areas-of-Concern classification."""

__version__ = "0.1.0"
