"""Numerical homogenisation of a high-contrast periodic elastic composite.

The package builds a unit-cell mesh with a soft elliptical inclusion, solves
the soft-inclusion Dirichlet spectrum and the stiff-matrix cell problems,
evaluates the matrix-valued Zhikov function and the effective dispersion
relation, and checks the small-quasimomentum behaviour of the stiff
Dirichlet-to-Neumann map.
"""

__version__ = "0.1.0"

from .bloch import BlochData, bloch_eigs, eigen_means
from .dispersion import direction_stiffness, dispersion_branches, dispersion_surface, group_velocity_check
from .eigen import EigenSet, dense_spectrum, smallest_eigenpairs
from .errors import HiconError
from .fem import assemble_boundary_mass, assemble_mass, assemble_stiffness, build_dofmap
from .macro import MacroTensor, assemble_macro, solve_corrector
from .mesh import Geometry, TriMesh, build_unit_cell_mesh, refine
from .steklov import dtn_convergence_study, dtn_hom, dtn_schur, steklov_eigs
from .tensor import ElasticTensor, x_chi_apply
from .zhikov import ZhikovEval, find_band_gaps, zhikov_matrix

__all__ = [
    "BlochData",
    "EigenSet",
    "ElasticTensor",
    "Geometry",
    "HiconError",
    "MacroTensor",
    "TriMesh",
    "ZhikovEval",
    "assemble_boundary_mass",
    "assemble_macro",
    "assemble_mass",
    "assemble_stiffness",
    "bloch_eigs",
    "build_dofmap",
    "build_unit_cell_mesh",
    "dense_spectrum",
    "direction_stiffness",
    "dispersion_branches",
    "dispersion_surface",
    "dtn_convergence_study",
    "dtn_hom",
    "dtn_schur",
    "eigen_means",
    "find_band_gaps",
    "group_velocity_check",
    "refine",
    "smallest_eigenpairs",
    "solve_corrector",
    "steklov_eigs",
    "x_chi_apply",
    "zhikov_matrix",
]
