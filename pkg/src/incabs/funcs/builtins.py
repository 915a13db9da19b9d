"""Builtin vector fields: Rastrigin and the all-to-all swarm rendezvous dynamics."""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .. import _kernels
from ..errors import BadParameter, UnknownBuiltin
from ..mesh import DomainBox
from .spec import BuiltinId, FunctionSpec

RASTRIGIN_BOUND = 5.1
SINGULAR_NORM = 1e-12

# per-agent bounds for the swarm benchmark (agents 1..5)
SWARM_X_BOUNDS = [(-5.0, 5.0), (-5.0, 5.0), (-7.0, 7.0), (-7.0, 7.0), (-7.0, 7.0)]
SWARM_Y_BOUNDS = [(0.0, 0.4), (0.5, 0.9), (1.0, 5.0), (0.0, 0.876), (0.0, 1.67)]
SWARM_HEADING_BOUNDS = (-0.02, 0.02)


def _positive_int(params: Mapping[str, Any], key: str) -> int:
    if key not in params:
        raise BadParameter(f"missing parameter {key!r}")
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise BadParameter(f"parameter {key!r} must be a positive integer, got {value!r}")
    return int(value)


def heading_angle(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Signed smallest rotation from ``v1`` to ``v2`` (rows of 2-vectors).

    Zero when either vector is (numerically) zero; sgn(0) = 0 for parallel vectors.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    n1 = np.hypot(v1[..., 0], v1[..., 1])
    n2 = np.hypot(v2[..., 0], v2[..., 1])
    singular = (n1 < SINGULAR_NORM) | (n2 < SINGULAR_NORM)
    denom = np.where(singular, 1.0, n1 * n2)
    cos = np.clip((v1[..., 0] * v2[..., 0] + v1[..., 1] * v2[..., 1]) / denom, -1.0, 1.0)
    cross = v1[..., 0] * v2[..., 1] - v1[..., 1] * v2[..., 0]
    return np.where(singular, 0.0, np.sign(cross) * np.arccos(cos))


def swarm_rendezvous(positions: np.ndarray, agents: int) -> np.ndarray:
    """Unicycle rendezvous field; state layout is (x_i, y_i, heading_i) per agent."""
    S = np.asarray(positions, dtype=float).reshape(len(positions), agents, 3)
    p = S[:, :, :2]
    heading = S[:, :, 2]
    if agents > 1:
        # mean over all other agents of p^j - p^i
        pdot = (p.sum(axis=1, keepdims=True) - agents * p) / (agents - 1)
    else:
        pdot = np.zeros_like(p)
    bearing = np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    speed = np.sum(bearing * pdot, axis=-1)
    turn = heading_angle(bearing, pdot)
    out = np.stack([speed * bearing[..., 0], speed * bearing[..., 1], turn], axis=-1)
    return out.reshape(len(positions), 3 * agents)


def instantiate_builtin(name: str, params: Mapping[str, Any] | None = None) -> FunctionSpec:
    params = dict(params or {})
    if name == "rastrigin":
        d = _positive_int(params, "d")
        extra = set(params) - {"d"}
        if extra:
            raise BadParameter(f"unexpected rastrigin parameters {sorted(extra)}")
        return FunctionSpec(d, 0, 1, BuiltinId(name, (("d", d),)), _impl=lambda P: _kernels.rastrigin(P)[:, None])
    if name == "swarm_rendezvous":
        agents = _positive_int(params, "N")
        hood = params.get("neighborhood", "all")
        if hood not in ("all", "all-others", "all_others"):
            raise BadParameter(f"only the all-others neighbourhood is supported, got {hood!r}")
        extra = set(params) - {"N", "neighborhood"}
        if extra:
            raise BadParameter(f"unexpected swarm parameters {sorted(extra)}")
        n = 3 * agents
        return FunctionSpec(
            n, 0, n, BuiltinId(name, (("N", agents),)), _impl=lambda P: swarm_rendezvous(P, agents)
        )
    raise UnknownBuiltin(f"unknown builtin {name!r}; choose rastrigin or swarm_rendezvous")


def default_domain(name: str, params: Mapping[str, Any] | None = None) -> DomainBox:
    """Benchmark domain of a builtin (the swarm bounds are tabulated for up to 5 agents)."""
    params = dict(params or {})
    if name == "rastrigin":
        return DomainBox.cube(-RASTRIGIN_BOUND, RASTRIGIN_BOUND, _positive_int(params, "d"))
    if name == "swarm_rendezvous":
        agents = _positive_int(params, "N")
        if agents > len(SWARM_X_BOUNDS):
            raise BadParameter(f"no default swarm domain for N={agents}; give bounds explicitly")
        lower, upper = [], []
        for i in range(agents):
            for lo, hi in (SWARM_X_BOUNDS[i], SWARM_Y_BOUNDS[i], SWARM_HEADING_BOUNDS):
                lower.append(lo)
                upper.append(hi)
        return DomainBox(tuple(lower), tuple(upper), 3 * agents, 0)
    raise UnknownBuiltin(f"unknown builtin {name!r}")


def rastrigin_lipschitz_1d(bound: float = RASTRIGIN_BOUND, samples: int = 2_000_001) -> float:
    """Upper bound on |d/dx (x^2 - 10 cos 2 pi x)| over [-bound, bound].

    Dense scan of the derivative plus the most it can rise between scan
    points (half a step times max |f''| = 2 + 40 pi^2).
    """
    x = np.linspace(-bound, bound, samples)
    scan = float(np.max(np.abs(2.0 * x + 20.0 * math.pi * np.sin(2.0 * math.pi * x))))
    step = 2.0 * bound / (samples - 1)
    return scan + 0.5 * step * (2.0 + 40.0 * math.pi**2)
