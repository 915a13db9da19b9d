"""Incremental and one-step affine abstraction drivers."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import BudgetTooSmall, MemoryBudgetExceeded, MissingConstant
from .funcs.spec import FunctionSpec, Smoothness
from .lp import AffinePlanePair, LinearProgram, SolveReport, build_incremental_program, build_onestep_program, solve_lp
from .mesh import (
    BoxRegion,
    DomainBox,
    OperatingRegion,
    UniformMesh,
    expand_region,
    initial_region,
    interpolation_radius,
    is_full,
    mesh_diameter,
    region_vertices,
    start_index,
)

log = logging.getLogger(__name__)

OUTPUT_MODES = ("scalar", "replicated")

ProgramHook = Callable[[int, LinearProgram], None]


class IncrementPlan(NamedTuple):
    kappa: int
    bounds: tuple[int, int]


def plan_increments(s_max: int, budget: int, carried: int, dim: int) -> IncrementPlan:
    """Predicted increment count for ``budget`` points per LP and ``carried`` points kept each time.

    The count is the ceiling of (s_max - budget) / (budget - carried) plus one;
    ``bounds`` is the range obtained for carried counts between dim + 1 and
    budget - 1.
    """
    if budget < 1 or s_max < 1:
        raise BudgetTooSmall(f"need positive budget and mesh size, got {budget} and {s_max}")
    if budget >= s_max:
        return IncrementPlan(1, (1, 1))
    if budget <= carried:
        raise BudgetTooSmall(f"budget {budget} must exceed the {carried} carried points")
    if budget <= dim + 1:
        raise BudgetTooSmall(f"budget {budget} must exceed dim + 1 = {dim + 1}")
    kappa = math.ceil((s_max - budget) / (budget - carried)) + 1
    lower = math.ceil((s_max - budget) / (budget - (dim + 1))) + 1
    upper = s_max - budget + 1
    return IncrementPlan(kappa, (lower, upper))


def minimum_budget(dim: int, partial: bool = True) -> int:
    """Smallest budget that always leaves room for a new point next to the carried vertices.

    A box has at most 2^d hull vertices; a box with partial layers at most
    2^(d+1) - 2.
    """
    return 2 ** (dim + 1) - 1 if partial else 2**dim + 1


@dataclass(frozen=True)
class AbstractionConfig:
    budget: int
    expansion_order: tuple[int, ...] | None = None
    start_region: str | BoxRegion = "left_corner"
    warm_start: tuple[tuple[int, ...], ...] = ()
    output_mode: str = "scalar"
    partial_slabs: bool = True
    coupling: str = "l1"
    memory_cap: int | None = None

    def validate(self, mesh: UniformMesh, spec: FunctionSpec | None = None) -> None:
        d = mesh.dim
        need = minimum_budget(d, self.partial_slabs)
        if self.budget < min(need, mesh.s_max):
            hint = "" if not self.partial_slabs else " (box-only growth needs 2^d + 1)"
            raise BudgetTooSmall(f"budget {self.budget} is below the minimum {need} for d={d}{hint}")
        if self.memory_cap is not None and self.memory_cap < self.budget:
            raise ValueError(f"memory cap {self.memory_cap} is smaller than the budget {self.budget}")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"output_mode must be one of {OUTPUT_MODES}")
        if self.output_mode == "replicated" and spec is not None and spec.n_out != 1:
            raise ValueError("replicated output mode needs a scalar-output function")
        if isinstance(self.start_region, str) and self.start_region not in ("left_corner", "center"):
            raise ValueError(f"unknown start region {self.start_region!r}")
        for w in self.warm_start:
            if len(w) != d or any(not 0 <= int(i) < c for i, c in zip(w, mesh.points_per_dim)):
                raise ValueError(f"warm-start index {tuple(w)} outside the mesh")
        if len(self.warm_start) >= self.budget:
            raise BudgetTooSmall("warm-start points leave no room for the first region")


@dataclass
class IncrementLog:
    k: int
    region: OperatingRegion
    sample_count: int
    theta_k: float
    planes: AffinePlanePair
    solve: SolveReport
    peak_active_points: int
    new_points: int
    carried: int
    overflow: bool = False
    elapsed: float = 0.0


@dataclass
class FinalAbstraction:
    planes: AffinePlanePair  # inflated by sigma
    raw_planes: AffinePlanePair
    sigma: float
    kappa: int
    overall_theta: float
    log: list[IncrementLog]
    domain: DomainBox
    points_per_dim: tuple[int, ...]
    method: str
    output_mode: str = "scalar"
    budget: int | None = None
    smoothness: str | None = None
    smoothness_constant: float | None = None
    constant_source: str | None = None
    elapsed: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def m(self) -> int:
        return self.domain.m

    @property
    def peak_active_points(self) -> int:
        return max(entry.peak_active_points for entry in self.log)

    @property
    def final_theta(self) -> float:
        return self.log[-1].theta_k

    @property
    def sound_on_continuum(self) -> bool:
        return self.constant_source == "user_supplied" and self.smoothness_constant is not None


def inflation_sigma(mesh: UniformMesh, cls: Smoothness | str, constant: float | None) -> float:
    """Interpolation error bound for one mesh cell of ``mesh``."""
    if constant is None:
        raise MissingConstant("a smoothness constant is required to bound the interpolation error")
    if constant < 0:
        raise ValueError(f"smoothness constant must be non-negative, got {constant}")
    cls = Smoothness.parse(cls)
    radius = interpolation_radius(mesh.dim, mesh_diameter(mesh))
    if cls is Smoothness.C0:
        return 2.0 * constant * radius
    if cls is Smoothness.LIPSCHITZ:
        return constant * radius
    if cls is Smoothness.C1:
        return radius * constant
    return 0.5 * radius * radius * constant


def inflate_abstraction(
    planes: AffinePlanePair, mesh: UniformMesh, cls: Smoothness | str, constant: float | None
) -> tuple[AffinePlanePair, float]:
    sigma = inflation_sigma(mesh, cls, constant)
    return planes.shifted(sigma), sigma


def abstraction_error(planes: AffinePlanePair, corners) -> float:
    """Largest 1-norm gap between the upper and lower maps over ``corners``."""
    C = np.asarray(corners, dtype=float)
    if C.size == 0:
        raise ValueError("abstraction error needs at least one corner")
    return float(planes.gap(C.reshape(len(C), -1)).max())


# ---------------------------------------------------------------- drivers


def _finish(
    mesh: UniformMesh,
    spec: FunctionSpec,
    entries: list[IncrementLog],
    method: str,
    output_mode: str,
    budget: int | None,
    started: float,
) -> FinalAbstraction:
    raw = entries[-1].planes
    notes = []
    if spec.smoothness is not None and spec.smoothness_constant is not None:
        planes, sigma = inflate_abstraction(raw, mesh, spec.smoothness, spec.smoothness_constant)
        if spec.constant_source != "user_supplied":
            notes.append("smoothness constant is estimated; the continuous-domain guarantee is not sound")
    else:
        planes, sigma = raw, 0.0
        notes.append("no smoothness constant given; the guarantee covers grid points only")
    return FinalAbstraction(
        planes=planes,
        raw_planes=raw,
        sigma=sigma,
        kappa=len(entries),
        overall_theta=max(e.theta_k for e in entries),
        log=entries,
        domain=mesh.domain,
        points_per_dim=mesh.points_per_dim,
        method=method,
        output_mode=output_mode,
        budget=budget,
        smoothness=spec.smoothness.value if spec.smoothness is not None else None,
        smoothness_constant=spec.smoothness_constant,
        constant_source=spec.constant_source,
        elapsed=time.perf_counter() - started,
        notes=notes,
    )


def _replicate(entry: IncrementLog, copies: int) -> IncrementLog:
    entry.planes = entry.planes.replicated(copies)
    entry.theta_k = entry.planes.theta
    return entry


def _check_dims(mesh: UniformMesh, spec: FunctionSpec) -> None:
    if spec.arity_in != mesh.dim or spec.n != mesh.domain.n:
        raise ValueError(
            f"function takes (n={spec.n}, m={spec.m}) but the mesh domain has "
            f"(n={mesh.domain.n}, m={mesh.domain.m})"
        )


def run_onestep(
    mesh: UniformMesh,
    spec: FunctionSpec,
    *,
    memory_cap: int | None = None,
    output_mode: str = "scalar",
    coupling: str = "l1",
    on_program: ProgramHook | None = None,
) -> FinalAbstraction:
    """Single LP over every grid point, with the gap bounded at the mesh corners."""
    _check_dims(mesh, spec)
    if output_mode not in OUTPUT_MODES:
        raise ValueError(f"output_mode must be one of {OUTPUT_MODES}")
    if memory_cap is not None and mesh.s_max > memory_cap:
        raise MemoryBudgetExceeded(
            f"one-step abstraction needs {mesh.s_max} active points, cap is {memory_cap}"
        )
    started = time.perf_counter()
    idx = mesh.full_box.indices()
    P = mesh.positions(idx)
    F = spec.evaluate_many(P)
    corners = mesh.positions(region_vertices(mesh.full_box))
    program = build_onestep_program((P, F), corners, n=spec.n, coupling=coupling)
    if on_program is not None:
        on_program(1, program)
    planes, report = solve_lp(program)
    entry = IncrementLog(
        k=1,
        region=OperatingRegion(mesh.full_box),
        sample_count=mesh.s_max,
        theta_k=planes.theta,
        planes=planes,
        solve=report,
        peak_active_points=mesh.s_max,
        new_points=mesh.s_max,
        carried=0,
        elapsed=time.perf_counter() - started,
    )
    if output_mode == "replicated":
        _replicate(entry, spec.n)
    return _finish(mesh, spec, [entry], "onestep", output_mode, None, started)


def run_incremental(
    mesh: UniformMesh, spec: FunctionSpec, config: AbstractionConfig, *, on_program: ProgramHook | None = None
) -> FinalAbstraction:
    """Grow the operating region increment by increment, one LP per increment.

    ``on_program(k, program)`` is called with each assembled LP before it is solved.
    """
    _check_dims(mesh, spec)
    config.validate(mesh, spec)
    started = time.perf_counter()
    budget = config.budget
    order = config.expansion_order
    balanced = config.start_region == "center"
    warm = sorted({tuple(int(i) for i in w) for w in config.warm_start})

    def check_cap(active: int) -> None:
        if config.memory_cap is not None and active > config.memory_cap:
            raise MemoryBudgetExceeded(f"increment needs {active} active points, cap is {config.memory_cap}")

    if isinstance(config.start_region, BoxRegion):
        first = initial_region(mesh, budget, config.start_region)
    else:
        first = initial_region(
            mesh,
            budget - len(warm),
            start_index(mesh, config.start_region),
            order,
            partial=config.partial_slabs,
            balanced=balanced,
        )
    region = first.region
    extra = np.array([w for w in warm if not region.contains(w)], dtype=np.int64).reshape(-1, mesh.dim)
    sample_idx = np.concatenate([first.new_points, extra])
    sample_idx = sample_idx[np.lexsort(sample_idx.T[::-1])]
    gap_idx = np.concatenate([region_vertices(region), extra])
    gap_idx = gap_idx[np.lexsort(gap_idx.T[::-1])]
    check_cap(len(sample_idx))

    t0 = time.perf_counter()
    P = mesh.positions(sample_idx)
    program = build_onestep_program((P, spec.evaluate_many(P)), mesh.positions(gap_idx), n=spec.n, coupling=config.coupling)
    if on_program is not None:
        on_program(1, program)
    planes, report = solve_lp(program)
    entries = [
        IncrementLog(1, region, len(sample_idx), planes.theta, planes, report, len(sample_idx),
                     len(sample_idx), 0, first.overflow, time.perf_counter() - t0)
    ]
    log.debug("increment 1: %d samples, theta %.6g", len(sample_idx), planes.theta)

    k = 1
    while not is_full(mesh, region):
        k += 1
        t0 = time.perf_counter()
        prev_vertices = region_vertices(region)
        step = expand_region(mesh, region, budget, order, partial=config.partial_slabs, balanced=balanced)
        region = step.region
        active = len(step.new_points) + len(prev_vertices)
        check_cap(active)
        P = mesh.positions(step.new_points)
        program = build_incremental_program(
            (P, spec.evaluate_many(P)),
            mesh.positions(prev_vertices),
            planes,
            mesh.positions(region_vertices(region)),
            coupling=config.coupling,
        )
        if on_program is not None:
            on_program(k, program)
        planes, report = solve_lp(program)
        entries.append(
            IncrementLog(k, region, active, planes.theta, planes, report, active,
                         len(step.new_points), len(prev_vertices), step.overflow, time.perf_counter() - t0)
        )
        log.debug("increment %d: %d new + %d carried, theta %.6g", k, len(step.new_points), len(prev_vertices), planes.theta)

    if config.output_mode == "replicated":
        for entry in entries:
            _replicate(entry, spec.n)
    return _finish(mesh, spec, entries, "incremental", config.output_mode, budget, started)


# ---------------------------------------------------------------- serialization

FORMAT_VERSION = 1


def _matrix(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _unmatrix(entry: dict) -> np.ndarray:
    shape = tuple(int(s) for s in entry["shape"])
    data = np.asarray(entry["data"], dtype=float)
    if data.size != math.prod(shape):
        raise ValueError(f"matrix data has {data.size} entries, header says {shape}")
    return data.reshape(shape)


def planes_to_dict(planes: AffinePlanePair) -> dict:
    return {
        "A_upper": _matrix(planes.A_upper),
        "B_upper": _matrix(planes.B_upper),
        "h_upper": _matrix(planes.h_upper),
        "A_lower": _matrix(planes.A_lower),
        "B_lower": _matrix(planes.B_lower),
        "h_lower": _matrix(planes.h_lower),
        "theta": planes.theta,
    }


def planes_from_dict(data: dict) -> AffinePlanePair:
    return AffinePlanePair(
        *(_unmatrix(data[key]) for key in ("A_upper", "B_upper", "h_upper", "A_lower", "B_lower", "h_lower")),
        theta=float(data["theta"]),
    )


def _increment_to_dict(entry: IncrementLog) -> dict:
    return {
        "k": entry.k,
        "region": entry.region.to_dict(),
        "sample_count": entry.sample_count,
        "theta_k": entry.theta_k,
        "planes": planes_to_dict(entry.planes),
        "solve": entry.solve.to_dict(),
        "peak_active_points": entry.peak_active_points,
        "new_points": entry.new_points,
        "carried": entry.carried,
        "overflow": entry.overflow,
    }


def _increment_from_dict(data: dict) -> IncrementLog:
    solve = data["solve"]
    return IncrementLog(
        k=int(data["k"]),
        region=OperatingRegion.from_dict(data["region"]),
        sample_count=int(data["sample_count"]),
        theta_k=float(data["theta_k"]),
        planes=planes_from_dict(data["planes"]),
        solve=SolveReport(**solve),
        peak_active_points=int(data["peak_active_points"]),
        new_points=int(data["new_points"]),
        carried=int(data["carried"]),
        overflow=bool(data["overflow"]),
    )


def abstraction_to_dict(result: FinalAbstraction) -> dict:
    """JSON-ready document; wall-clock timings are deliberately left out so reruns are byte-identical."""
    doc = {"format": FORMAT_VERSION, "n": result.n, "m": result.m}
    doc["domain"] = {"lower": list(result.domain.lower), "upper": list(result.domain.upper)}
    doc["points_per_dim"] = list(result.points_per_dim)
    doc.update({k: v for k, v in planes_to_dict(result.planes).items() if k != "theta"})
    doc.update(
        {
            "sigma": result.sigma,
            "kappa": result.kappa,
            "theta": result.overall_theta,
            "final_theta": result.final_theta,
            "method": result.method,
            "output_mode": result.output_mode,
            "budget": result.budget,
            "smoothness": result.smoothness,
            "smoothness_constant": result.smoothness_constant,
            "constant_source": result.constant_source,
            "notes": list(result.notes),
            "raw": planes_to_dict(result.raw_planes),
            "per_increment": [_increment_to_dict(e) for e in result.log],
        }
    )
    return doc


def abstraction_from_dict(doc: dict) -> FinalAbstraction:
    if doc.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported abstraction format {doc.get('format')!r}")
    n, m = int(doc["n"]), int(doc["m"])
    domain = DomainBox(tuple(doc["domain"]["lower"]), tuple(doc["domain"]["upper"]), n, m)
    raw = planes_from_dict(doc["raw"])
    planes = planes_from_dict({**doc, "theta": raw.theta + 2.0 * float(doc["sigma"]) * raw.n_out})
    return FinalAbstraction(
        planes=planes,
        raw_planes=raw,
        sigma=float(doc["sigma"]),
        kappa=int(doc["kappa"]),
        overall_theta=float(doc["theta"]),
        log=[_increment_from_dict(e) for e in doc["per_increment"]],
        domain=domain,
        points_per_dim=tuple(int(c) for c in doc["points_per_dim"]),
        method=doc["method"],
        output_mode=doc["output_mode"],
        budget=doc["budget"],
        smoothness=doc["smoothness"],
        smoothness_constant=doc["smoothness_constant"],
        constant_source=doc["constant_source"],
        notes=list(doc["notes"]),
    )


def save_abstraction(result: FinalAbstraction, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(abstraction_to_dict(result), fh, indent=1)
        fh.write("\n")


def load_abstraction(path) -> FinalAbstraction:
    with open(path, encoding="utf-8") as fh:
        return abstraction_from_dict(json.load(fh))
