"""geneo-lab: a two-level additive Schwarz solver with a spectral coarse
space for heterogeneous elliptic problems on structured grids, and an
experiment CLI that reproduces robustness, scaling, and coarse-approximation
studies."""

__version__ = "0.1.0"

from . import decomposition, fem, geneo, linalg, solvers

__all__ = ["decomposition", "fem", "geneo", "linalg", "solvers", "__version__"]
