"""Realizability-preserving second-order schemes for slab-geometry moment models."""
from .basis import BasisSpec, full_basis, hat_basis, make_nodal_basis, partial_basis
from .entropy_solver import NewtonConfig, OptimizationFailure, solve, solve_batch
from .fv_scheme import Scheme, SchemeConfig, build_model, simulate
from .problems import get_problem, plane_source, smooth_gaussian, source_beam
from .quadrature import build_gauss_lobatto

__all__ = [
    "BasisSpec", "NewtonConfig", "OptimizationFailure", "Scheme", "SchemeConfig",
    "build_gauss_lobatto", "build_model", "full_basis", "get_problem", "hat_basis",
    "make_nodal_basis", "partial_basis", "plane_source", "simulate", "smooth_gaussian",
    "solve", "solve_batch", "source_beam",
]
