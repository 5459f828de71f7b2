"""Quantum-enhanced BEC gravimetry simulation toolkit.

Subpackages by concern: physical parameters (constants), grids and spectral
transforms (grids), two-component mean-field engine (meanfield), analytic
one-axis-twisting model (oat), truncated-Wigner ensembles (wigner), pulse
sequences and sensitivity (interferometer), configuration and CLI (config,
cli).
"""

__version__ = "0.1.0"
