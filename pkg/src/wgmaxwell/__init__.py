"""Weak Galerkin solver for a 2D curl-curl problem with divergence constraint."""

from .analysis import (
    ManufacturedCase,
    StudyReport,
    StudyRow,
    case_e1,
    convergence_orders,
    error_energy,
    error_l2_p,
    error_l2_u,
    norm_suite,
    patch_cases,
    polynomial_case,
)
from .exceptions import (
    CapacityError,
    ConditioningError,
    ConfigurationError,
    GeometryError,
    MeshIntegrityError,
    SingularSystemError,
    WGError,
)
from .mesh import GridFamily, PolyMesh, build_grid, dump_mesh, load_mesh
from .system import DofMap, SaddleSystem, Solution, apply_boundary, assemble, build_dof_map, solve
from .weak_ops import local_weak_ops, weak_curl_degree

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConditioningError",
    "ConfigurationError",
    "DofMap",
    "GeometryError",
    "GridFamily",
    "ManufacturedCase",
    "MeshIntegrityError",
    "PolyMesh",
    "SaddleSystem",
    "SingularSystemError",
    "Solution",
    "StudyReport",
    "StudyRow",
    "WGError",
    "apply_boundary",
    "assemble",
    "build_dof_map",
    "build_grid",
    "case_e1",
    "convergence_orders",
    "dump_mesh",
    "error_energy",
    "error_l2_p",
    "error_l2_u",
    "load_mesh",
    "local_weak_ops",
    "norm_suite",
    "patch_cases",
    "polynomial_case",
    "solve",
    "weak_curl_degree",
]
