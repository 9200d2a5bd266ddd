"""Numerical equilibrium measures of holomorphic endomorphisms of P^1 and P^2."""

from .empirical import EmpiricalMeasure
from .endo import HomogeneousMap, evaluate, iterate_eval, iterate_jacobian, local_degree
from .errors import EquidynError, PreconditionError
from .library import bundled_map
from .proj import ProjPoint, fs_distance, normalize

__all__ = [
    "EmpiricalMeasure",
    "EquidynError",
    "HomogeneousMap",
    "PreconditionError",
    "ProjPoint",
    "bundled_map",
    "evaluate",
    "fs_distance",
    "iterate_eval",
    "iterate_jacobian",
    "local_degree",
    "normalize",
]

__version__ = "0.1.0"
