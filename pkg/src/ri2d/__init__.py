"""Two-dimensional random interlacements on Z^2 and random walk on the torus."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"

from .kernel import GAMMA_PRIME, PotentialKernel, build_kernel, potential_real
from .lattice import LatticePoint, ball, internal_boundary, outer_boundary
from .potential import DegenerateSetError, LatticeSet, PotentialProfile, analyze
from .rng import RngSeed

__all__ = [
    "GAMMA_PRIME",
    "DegenerateSetError",
    "LatticePoint",
    "LatticeSet",
    "PotentialKernel",
    "PotentialProfile",
    "RngSeed",
    "analyze",
    "ball",
    "build_kernel",
    "internal_boundary",
    "outer_boundary",
    "potential_real",
    "__version__",
]
