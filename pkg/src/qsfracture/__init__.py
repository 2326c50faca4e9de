"""Quasistatic brittle fracture by incremental global energy minimisation on facet cracks."""

from .driver import (AuditReport, ConvergenceReport, EvolutionTrace, TimeGrid, TraceStep,
                     boundary_traction_work, convergence_study, energy_audit, run_evolution,
                     theta)
from .energy import (BodyForceModel, BulkModel, EnergyBreakdown, FractureModel,
                     SurfaceForceModel, ToughnessModel, total_energy)
from .mesh import Mesh, MeshError, MeshSpec, build_mesh
from .sbv import CrackState, Deformation
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario, write_trace
from .signals import Trajectory, riemann_defect, shifted_grid_subdivision
from .solver import (SolveSettings, SolverError, StepResult, minimize_step, solve_elastic)

__all__ = [
    "AuditReport", "BodyForceModel", "BulkModel", "ConvergenceReport", "CrackState",
    "Deformation", "EnergyBreakdown", "EvolutionTrace", "FractureModel", "Mesh", "MeshError",
    "MeshSpec", "Scenario", "ScenarioError", "SolveSettings", "SolverError", "StepResult",
    "SurfaceForceModel", "TimeGrid", "ToughnessModel", "TraceStep", "Trajectory",
    "boundary_traction_work", "build_mesh", "convergence_study", "energy_audit",
    "load_scenario", "minimize_step", "parse_scenario", "riemann_defect", "run_evolution",
    "shifted_grid_subdivision", "solve_elastic", "theta", "total_energy", "write_trace",
]
