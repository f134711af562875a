"""Helmholtz scattering by an obstacle inside a penetrable two-layer medium."""
from .errors import LayscatError
from .geometry import (
    Part,
    QuadSurface,
    as_obstacle,
    make_sphere,
    make_star_surface,
    partition_boundary,
)
from .solver import (
    BlockSystem,
    DensitySet,
    PlaneWave,
    PointSource,
    ScatteringConfig,
    build_block_operator,
    build_rhs,
    solve_densities,
)

__version__ = "0.1.0"
