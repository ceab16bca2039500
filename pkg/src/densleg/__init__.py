"""densleg: density-based topology optimization of 2D plane-stress plates.

Static and modal finite-element analysis on regular grids, penalized
variable-density compliance minimization with an optimality-criteria update,
binary reconstruction of converged designs, and before/after reporting.
"""

from .model import (AA6061, DesignField, GridMesh, LoadCase, Material,
                    MATERIAL_PRESETS, OptimizationProblem, PointLoad, SimpParams,
                    SolverError, ValidationError, baseline_field, build_grid,
                    uniform_field, validate_problem)
from .modal import ModalResult, assemble_mass, modal_analyze, solve_modes
from .probfile import load_problem, parse_problem, serialize_problem
from .reconstruct import (BinaryLayout, cleanup_connectivity, enforce_symmetry,
                          reanalyze, threshold, threshold_for_volume)
from .report import (AnalysisRecord, ComparisonReport, MassReport,
                     build_comparison, mass_of, reduction_ratio)
from .simp import (DensityFilter, IterationRecord, OptimizeOutcome,
                   apply_density_filter, chain_rule_filter,
                   compliance_sensitivity, oc_update, optimize, simp_young)
from .static import (StaticResult, StrengthCheck, analyze_design,
                     assemble_stiffness, build_load_vector, check_strength,
                     compliance, element_stiffness, solve_static, von_mises)

__version__ = "0.1.0"

__all__ = [
    "AA6061", "AnalysisRecord", "BinaryLayout", "ComparisonReport",
    "DensityFilter", "DesignField", "GridMesh", "IterationRecord", "LoadCase",
    "MassReport", "Material", "MATERIAL_PRESETS", "ModalResult",
    "OptimizationProblem", "OptimizeOutcome", "PointLoad", "SimpParams",
    "SolverError", "StaticResult", "StrengthCheck", "ValidationError",
    "analyze_design", "apply_density_filter", "assemble_mass",
    "assemble_stiffness", "baseline_field", "build_comparison", "build_grid",
    "build_load_vector", "chain_rule_filter", "check_strength",
    "cleanup_connectivity", "compliance", "compliance_sensitivity",
    "element_stiffness", "enforce_symmetry", "load_problem", "mass_of",
    "modal_analyze", "oc_update", "optimize", "parse_problem", "reanalyze",
    "reduction_ratio", "serialize_problem", "simp_young", "solve_modes",
    "solve_static", "threshold", "threshold_for_volume", "uniform_field",
    "validate_problem", "von_mises",
]
