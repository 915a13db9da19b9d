"""Vector fields: the expression language, builtin systems and smoothness estimates."""

from .builtins import default_domain, heading_angle, instantiate_builtin, rastrigin_lipschitz_1d, swarm_rendezvous
from .smoothness import estimate_smoothness_bound, estimated_spec
from .spec import BuiltinId, FunctionSpec, Smoothness, evaluate, parse_function_spec

__all__ = [
    "BuiltinId",
    "FunctionSpec",
    "Smoothness",
    "default_domain",
    "estimate_smoothness_bound",
    "estimated_spec",
    "evaluate",
    "heading_angle",
    "instantiate_builtin",
    "parse_function_spec",
    "rastrigin_lipschitz_1d",
    "swarm_rendezvous",
]
