"""Incremental affine abstraction of nonlinear vector fields under a sample-point memory budget."""

from ._kernels import BACKEND
from .abstraction import (
    AbstractionConfig,
    FinalAbstraction,
    IncrementLog,
    abstraction_error,
    inflate_abstraction,
    load_abstraction,
    plan_increments,
    run_incremental,
    run_onestep,
    save_abstraction,
)
from .funcs import FunctionSpec, Smoothness, default_domain, instantiate_builtin, parse_function_spec
from .lp import AffinePlanePair, build_incremental_program, build_onestep_program, solve_lp
from .mesh import BoxRegion, DomainBox, OperatingRegion, UniformMesh, build_mesh, expand_region
from .verify import (
    brute_force_separation,
    check_continuous_sandwich,
    check_dominance,
    check_grid_sandwich,
    compare_methods,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AbstractionConfig",
    "AffinePlanePair",
    "BoxRegion",
    "DomainBox",
    "FinalAbstraction",
    "FunctionSpec",
    "IncrementLog",
    "OperatingRegion",
    "Smoothness",
    "UniformMesh",
    "abstraction_error",
    "brute_force_separation",
    "build_incremental_program",
    "build_mesh",
    "build_onestep_program",
    "check_continuous_sandwich",
    "check_dominance",
    "check_grid_sandwich",
    "compare_methods",
    "default_domain",
    "expand_region",
    "inflate_abstraction",
    "instantiate_builtin",
    "load_abstraction",
    "parse_function_spec",
    "plan_increments",
    "run_incremental",
    "run_onestep",
    "save_abstraction",
    "solve_lp",
]
