"""Arrow fields on Z^d: walks, coalescence, pasts, rank-one product systems
and directed passage percolation, with exhaustive checkers and a small
experiment runner."""

__version__ = "0.1.0"

from .lattice import (Direction, DomainError, E, N, W, S, U, D, GridField, Trajectory,
                      TraceError, Window, coalesce_time, format_arrows, parse_arrows,
                      step, trace)
from .fields import FieldSpec, make_field

__all__ = ["Direction", "DomainError", "E", "N", "W", "S", "U", "D", "GridField",
           "Trajectory", "TraceError", "Window", "coalesce_time", "format_arrows",
           "parse_arrows", "step", "trace", "FieldSpec", "make_field", "__version__"]
