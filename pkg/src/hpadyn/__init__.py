"""Spectra, pseudospectra, and transient growth of a delayed ACTH-cortisol oscillator.

Subpackages cover the model and its integration (:mod:`hpadyn.dde`),
pointwise linearization and the delay pencil (:mod:`hpadyn.jacobian`),
the period-map discretization (:mod:`hpadyn.floquet`), data-driven
Koopman analysis (:mod:`hpadyn.koopman`), and shared numerical kernels
(:mod:`hpadyn.numerics`).  The ``hpadyn`` command-line tool orchestrates
them; see the README.
"""

__version__ = "0.1.0"
