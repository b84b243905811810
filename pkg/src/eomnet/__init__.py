"""Equivalent-circuit simulation of electro-optomechanical transducers."""

__version__ = "0.1.0"
