"""Streamline-diffusion FEM on Shishkin meshes and weighted estimates of its discrete Green function."""

from .assembly import StabilizationProfile, apply_form, assemble
from .greens import SchemeSolver, discrete_green, solve_scheme
from .mesh import MeshParams, ProblemSpec, Region, ShishkinMesh, build_mesh
from .weights import WeightParams, coercivity_quantities, estimate_quantities, weighted_norm

__all__ = [
    "MeshParams", "ProblemSpec", "Region", "ShishkinMesh", "build_mesh",
    "StabilizationProfile", "apply_form", "assemble",
    "SchemeSolver", "discrete_green", "solve_scheme",
    "WeightParams", "coercivity_quantities", "estimate_quantities", "weighted_norm",
]

__version__ = "0.1.0"
