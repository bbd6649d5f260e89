"""Limit cycles and isochrons of planar oscillators with small state-dependent
delay, computed by solving the conjugacy (invariance) equation order by order
in the stable coordinate.

Layering, bottom up:

- :mod:`isocycle.fourier`     periodic functions on a uniform grid (spectral)
- :mod:`isocycle.exprs`       tiny expression language + forward-mode duals
- :mod:`isocycle.cutoff`      smooth plateau cut-off and its calculus
- :mod:`isocycle.jets`        truncated power series in s with Fourier rows
- :mod:`isocycle.models`      model definitions, loading, change of coordinates
- :mod:`isocycle.cycle`       order 0: frequency + invariant loop
- :mod:`isocycle.variational` order 1 and higher s-orders of the conjugacy
- :mod:`isocycle.tail`        the remainder beyond the polynomial orders
- :mod:`isocycle.pipeline`    full solve, solution serialization, reports
- :mod:`isocycle.validate`    independent delay integrator + cross checks
- :mod:`isocycle.cli`         command-line front end
"""

from isocycle.config import QuadConfig, SolverConfig

__all__ = ["QuadConfig", "SolverConfig", "__version__"]

__version__ = "0.1.0"
