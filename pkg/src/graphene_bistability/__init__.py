"""Optical bistability of a two-level emitter coupled to a graphene sheet.

A quantum emitter near doped graphene interacts with its own reflected field.
The resulting nonlinear Bloch equations can support two stable steady states.
This package computes the graphene response, the quasistatic Green tensor and
the QED couplings derived from it, the steady states and their stability,
the time dynamics, resonance fluorescence and photon statistics, and critical
slowing down near the folds.
"""

__version__ = "0.1.0"
