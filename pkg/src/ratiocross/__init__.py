"""Spacing-ratio statistics of the GOE-GUE crossover: exact 3x3 densities,
random-matrix samplers and the fitting/divergence tools built on them."""

__version__ = "0.1.0"
