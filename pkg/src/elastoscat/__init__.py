"""Time-harmonic elastic scattering by obstacles and their lossy effective media in 2D.

Finite elements on a truncated disk with an exact modal Dirichlet-to-Neumann
condition, series solutions for circular obstacles, far fields and
epsilon-rate experiments.
"""

import os as _os

_threads = _os.environ.get("ELASTOSCAT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .dtn import DtnOperator, DtnResonanceError, apply_dtn, build_dtn, radiation_flux  # noqa: E402
from .experiments import (ExperimentConfig, RateStudyRow, fit_loglog_slope, oracle_rate_study,  # noqa: E402
                          run_rate_study, run_validation)
from .fem import (ResonanceError, ScatteringProblem, Solution, energy_balance, scattered_flux,  # noqa: E402
                  solve_effective, solve_obstacle, solve_problem, traction_norm, traction_on_boundary)
from .materials import (ElasticTensor, ExteriorConstants, MaterialScene, effective_material,  # noqa: E402
                        effective_material_case1, effective_material_case2, isotropic_tensor)
from .mesh import BoundaryLayer, Mesh, SceneGeometry, build_scene_mesh  # noqa: E402
from .mshio import read_msh, write_msh  # noqa: E402
from .norms import h1_norm, l2_norm, sobolev_boundary_norm  # noqa: E402
from .oracle import DiskSeriesSolution, disk_series, effective_rate_oracle, eval_series  # noqa: E402
from .space import DisplacementField, FunctionSpace  # noqa: E402
from .tags import Boundary, Condition, Region  # noqa: E402
from .waves import (BumpSource, FarFieldPattern, IncidentField, far_field, far_field_distance,  # noqa: E402
                    fundamental_solution, plane_p, plane_s, point_source, represent_scattered)

__version__ = "0.1.0"

__all__ = [
    "DtnOperator", "DtnResonanceError", "apply_dtn", "build_dtn", "radiation_flux",
    "ExperimentConfig", "RateStudyRow", "fit_loglog_slope", "oracle_rate_study", "run_rate_study",
    "run_validation", "ResonanceError", "ScatteringProblem", "Solution", "energy_balance", "scattered_flux",
    "solve_effective", "solve_obstacle", "solve_problem", "traction_norm", "traction_on_boundary",
    "ElasticTensor", "ExteriorConstants", "MaterialScene", "effective_material", "effective_material_case1",
    "effective_material_case2", "isotropic_tensor", "BoundaryLayer", "Mesh", "SceneGeometry",
    "build_scene_mesh", "read_msh", "write_msh", "h1_norm", "l2_norm", "sobolev_boundary_norm",
    "DiskSeriesSolution", "disk_series", "effective_rate_oracle", "eval_series", "DisplacementField",
    "FunctionSpace", "Boundary", "Condition", "Region", "BumpSource", "FarFieldPattern", "IncidentField",
    "far_field", "far_field_distance", "fundamental_solution", "plane_p", "plane_s", "point_source",
    "represent_scattered",
]
