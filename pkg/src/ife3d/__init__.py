"""Immersed finite elements for 3D H(curl) interface problems on unfitted
tetrahedral meshes: local immersed bases forming a discrete de Rham complex,
a Petrov-Galerkin edge-element scheme, and an auxiliary-space preconditioner
with an interface-block smoother.
"""

from .analysis import (ConvergenceTable, InfSupResult, ManufacturedSolution,
                       SolverOptions, TimeDomainConfig, compute_errors,
                       condition_sweep, estimate_condition, estimate_infsup,
                       infsup_study, precond_bench, run_convergence,
                       run_time_domain, solve_benchmark)
from .assembly import (IfeDiscretization, apply_dirichlet, assemble_curlcurl,
                       assemble_nodal_aux, assemble_rhs, build_transfers,
                       dirichlet_edge_values)
from .derham import (build_space, commutativity_check, complex_check,
                     curl_incidence, divergence_incidence, exactness_check,
                     gradient_incidence, interpolate,
                     interpolate_exact_sphere)
from .geometry import (CallbackLevelSet, PlaneLevelSet, SphereLevelSet,
                       TorusLevelSet, classify_elements, compute_cut,
                       geometric_error_probe, interpolate_levelset,
                       mismatch_sign)
from .ife_local import (CoefficientPair, LocalBasis, build_jump_maps,
                        build_local_basis)
from .mesh import (Mesh, build_background_mesh, collect_entity_patch,
                   incidence_sign, single_tet_mesh)
from .quadrature import QuadRule, integrate_face_piece, integrate_piece, \
    tet_rule, tri_rule
from .solvers import (HXPreconditioner, SolveReport, amg_setup,
                      build_interface_block, gmres, lu_dense, pcg)

__version__ = "0.1.0"
