"""polybem: boundary-element layer potentials for 2D Laplace on polygons.

Assembles and solves the Galerkin boundary operators of the logarithmic
kernel (single layer V, double layer K and its adjoint, hypersingular W),
computes equilibrium densities and logarithmic capacity, verifies jump
relations and far-field expansions, solves Dirichlet / Neumann /
transmission problems by layer ansatz, and builds discrete harmonic
Bergman projections from layer-potential bases -- including the
corner-singular square-integrable harmonic functions of reentrant
polygons that finite-energy theory misses.
"""

from .boundary_ops import (BoundaryOperatorMatrix, DensityVector,
                           OperatorSuite, TraceVector, assemble_K,
                           assemble_Kadj, assemble_V, assemble_W,
                           mean_value, solve_V, solve_W)
from .geometry import (BoundaryMesh, CircleBoundary, PolygonalBoundary,
                       SimilarityTransform, apply_similarity, build_polygon,
                       circle_mesh, graded_mesh, lshape, unit_square)
from .l2_harmonic import (DomainQuadrature, HarmonicBasis, BergmanResult,
                          annulus_quadrature, bergman_project, build_basis,
                          disk_quadrature, gram, represent, trace_kernel_svd,
                          triangulate)
from .potentials import (FarFieldMoments, PotentialField, eval_double,
                         eval_single, far_field, greens_identity_check,
                         jump_report, mean_value_residual, one_sided_trace)
from .quadrature import (QuadratureRule, gauss_legendre,
                         near_singular_quadrature, segment_log_integral)
from .singular_solutions import (CornerSingularFunction,
                                 build_zero_dirichlet_function,
                                 build_zero_neumann_function,
                                 corner_singular_function,
                                 eval_corner_singular)
from .solvers import (BiesSolution, ExteriorFarField, exterior_dirichlet,
                      exterior_neumann, interior_dirichlet, interior_neumann,
                      transmission_p1, transmission_p2, transmission_p3)
from .special_densities import (AffineDoubleBasis, AffineSingleBasis,
                                EquilibriumData, affine_double_basis,
                                affine_single_basis, equilibrium_density,
                                recommend_rescale)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
