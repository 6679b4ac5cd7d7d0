"""Bifurcation analysis for periodic integrodifference equations on Nystrom grids."""
from .errors import PerifideError
from .quad import QuadratureRule, build_rule, point_rule, integrate, pairing
from .model import Growth, Kernel, ModelSpec
from .cyclic import PeriodicOrbit, eig_sequences, floquet, solve_periodic
from .bifurc import BifurcationPoint, classify
from .contin import Branch, continue_branch, switch_branch

__version__ = "0.1.0"

__all__ = [
    "PerifideError", "QuadratureRule", "build_rule", "point_rule", "integrate", "pairing",
    "Growth", "Kernel", "ModelSpec", "PeriodicOrbit", "eig_sequences", "floquet",
    "solve_periodic", "BifurcationPoint", "classify", "Branch", "continue_branch",
    "switch_branch", "__version__",
]
