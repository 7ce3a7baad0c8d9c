"""Dual-sourcing inventory control: exact dynamic programming, classical
heuristics, and a trainable recurrent neural controller."""

__version__ = "0.1.0"
