"""Spectral stability of periodic 1.5-dimensional relativistic kinetic
equilibria, decided through trajectory ergodic averages.

The package assembles a one-parameter family of self-adjoint block
operators from time-weighted averages along equilibrium characteristics,
counts negative eigenvalues of spectral truncations, evaluates a
negative-index instability criterion at the infinite-time limit, and
locates the kernel crossing that yields a growing mode.  A companion
module measures uniform ergodic-average decay rates for weighted shift
operators on the line.
"""

__version__ = "0.1.0"
