"""DG methods for 2D frictional contact with reduced normal compliance:
five interior-penalty/lifting variants, Uzawa + semismooth Newton solver,
residual a posteriori estimation and adaptive refinement studies.
"""

from .mesh import (BoundaryLabel, Mesh, MeshError, build_rectangle_mesh,
                   dorfler_mark, refine_nvb, side_labeler)
from .dgspace import (DGFunction, MaterialParams, TensorField2x2, dg_norm,
                      embed, enrich, jump_tensor, jump_vector,
                      average_tensor, local_lifting, strain, stress)
from .assembly import (AssembledSystem, MethodVariant, PenaltyError,
                       ProblemData, assemble_bilinear, assemble_load,
                       assemble_system, compliance_residual,
                       friction_coupling)
from .solver import (FrictionMultiplier, SolveReport, SolverError,
                     inner_newton, linear_solve, uzawa_solve)
from .estimator import (EstimatorBreakdown, OscillationReport,
                        compute_estimator, compute_oscillations,
                        per_element_indicators)
from .afem import (ProblemSetup, StudyRecord, StudyResult, adaptive_loop,
                   uniform_study)
from .config import ConfigError, RunConfig, load_preset, parse_config

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
