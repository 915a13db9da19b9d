"""Independent checks: grid and continuous sandwich, plane dominance, brute-force optimum, method comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .abstraction import AbstractionConfig, FinalAbstraction, IncrementLog, run_incremental, run_onestep
from .errors import MemoryBudgetExceeded, OracleScaleExceeded, ShapeMismatch
from .funcs.spec import FunctionSpec
from .lp import AffinePlanePair, _split_points
from .mesh import DomainBox, UniformMesh, region_vertices

SANDWICH_TOL = 1e-6
DOMINANCE_TOL = 1e-7
SUBOPTIMALITY_TOL = 1e-6
ORACLE_MAX_DIM = 2
ORACLE_MAX_POINTS = 200
MIN_CONTINUOUS_SAMPLES = 10_000
CONTINUOUS_TOL = 1e-9  # floating-point round-off only; sigma carries the real margin


@dataclass
class CheckResult:
    check_id: str
    passed: bool
    worst_violation: float
    witness: list[float] | None
    tolerance: float
    advisory: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        worst = self.worst_violation
        return {**asdict(self), "worst_violation": worst if math.isfinite(worst) else None}


@dataclass
class MethodComparison:
    theta_incremental: float
    theta_onestep: float | None  # None when the one-step run hit the memory cap
    kappa: int
    peak_incremental: int
    peak_onestep: int | None
    elapsed_incremental: float
    elapsed_onestep: float | None

    @property
    def ratio(self) -> float | None:
        if self.theta_onestep is None:
            return None
        if self.theta_onestep == 0:
            return 1.0 if self.theta_incremental == 0 else math.inf
        return self.theta_incremental / self.theta_onestep

    def to_dict(self, timings: bool = True) -> dict:
        out = {**asdict(self), "ratio": self.ratio}
        if not timings:
            out.pop("elapsed_incremental")
            out.pop("elapsed_onestep")
        return out


@dataclass
class VerificationReport:
    case: str
    checks: list[CheckResult] = field(default_factory=list)
    method_comparison: MethodComparison | None = None
    results: dict[str, FinalAbstraction] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.advisory)

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "case": self.case,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "method_comparison": self.method_comparison.to_dict(timings) if self.method_comparison else None,
        }

    def summary(self) -> str:
        lines = [f"case {self.case}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            state = "pass" if c.passed else "FAIL"
            if c.advisory:
                state += " (advisory)"
            lines.append(f"  {c.check_id:<34} {state:<18} worst={c.worst_violation:.3e} tol={c.tolerance:g}")
        return "\n".join(lines)


def _result(check_id, worst, witness, tol, detail="", advisory=False) -> CheckResult:
    witness = None if witness is None else [float(v) for v in witness]
    return CheckResult(check_id, bool(worst <= tol), float(worst), witness, tol, advisory, detail)


# ---------------------------------------------------------------- sandwich


def _bracket(planes: AffinePlanePair, P: np.ndarray, F: np.ndarray, margin: float):
    return _kernels.bracket_violation(
        P, F, planes.W_upper, planes.h_upper + margin, planes.W_lower, planes.h_lower - margin
    )


def check_grid_sandwich(
    abstraction: FinalAbstraction,
    mesh: UniformMesh,
    spec: FunctionSpec,
    *,
    subset: int | None = None,
    seed: int = 0,
    strict: bool = False,
    chunk: int = 1 << 15,
    tolerance: float = SANDWICH_TOL,
) -> CheckResult:
    """Re-evaluate f on the grid (streamed) and check the pre-inflation planes bracket it.

    The planes get a margin of sigma unless ``strict``; ``subset`` draws that
    many grid points uniformly (seeded) instead of visiting all of them.
    """
    planes = abstraction.raw_planes
    margin = 0.0 if strict else abstraction.sigma
    worst, witness = -math.inf, None

    if subset is not None and subset < mesh.s_max:
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(mesh.s_max, size=subset, replace=False))
        blocks = (mesh.unflat(flat[i : i + chunk]) for i in range(0, len(flat), chunk))
        blocks = ((idx, mesh.positions(idx)) for idx in blocks)
        detail = f"{subset} of {mesh.s_max} grid points (seed {seed})"
    else:
        blocks = mesh.iter_chunks(chunk)
        detail = f"all {mesh.s_max} grid points"

    for _, P in blocks:
        v, i = _bracket(planes, P, spec.evaluate_many(P), margin)
        if v > worst:
            worst, witness = v, P[i]
    return _result("grid_sandwich", worst, witness, tolerance, detail)


def check_continuous_sandwich(
    abstraction: FinalAbstraction,
    spec: FunctionSpec,
    domain: DomainBox,
    samples: int = 100_000,
    seed: int = 0,
    chunk: int = 1 << 15,
) -> CheckResult:
    """Uniform random points over ``domain`` must lie between the inflated planes.

    Only sound with a user-supplied smoothness constant; otherwise the result
    is marked advisory.
    """
    if samples < MIN_CONTINUOUS_SAMPLES:
        raise ValueError(f"need at least {MIN_CONTINUOUS_SAMPLES} samples, got {samples}")
    advisory = not abstraction.sound_on_continuum
    rng = np.random.default_rng(seed)
    worst, witness, violations = -math.inf, None, 0
    for start in range(0, samples, chunk):
        P = domain.sample(min(chunk, samples - start), rng)
        F = spec.evaluate_many(P)
        up = P @ abstraction.planes.W_upper.T + abstraction.planes.h_upper
        lo = P @ abstraction.planes.W_lower.T + abstraction.planes.h_lower
        excess = np.maximum(F - up, lo - F).max(axis=1)
        violations += int(np.count_nonzero(excess > CONTINUOUS_TOL))
        i = int(np.argmax(excess))
        if excess[i] > worst:
            worst, witness = float(excess[i]), P[i]
    detail = f"{violations} violations in {samples} samples (seed {seed})"
    if advisory:
        detail += "; smoothness constant not user-supplied, result is advisory"
    return _result("continuous_sandwich", worst, witness, CONTINUOUS_TOL, detail, advisory)


# ---------------------------------------------------------------- dominance


def check_dominance(
    log: Sequence[IncrementLog],
    mesh: UniformMesh,
    *,
    vertices_only: bool = False,
    exhaustive_limit: int = 1_000_000,
    tolerance: float = DOMINANCE_TOL,
) -> CheckResult:
    """Each increment's upper plane lies above, and lower plane below, the previous ones on the previous region.

    Regions with more than ``exhaustive_limit`` points are checked at their
    hull vertices, which is exact because plane differences are affine.
    """
    worst, witness = -math.inf, None
    shortcut = vertices_only
    for prev, cur in zip(log, log[1:]):
        region = prev.region
        if vertices_only or region.size > exhaustive_limit:
            idx = region_vertices(region)
            shortcut = True
        else:
            idx = region.indices()
        P = mesh.positions(idx)
        drop_up = prev.planes.upper(P) - cur.planes.upper(P)
        rise_lo = cur.planes.lower(P) - prev.planes.lower(P)
        excess = np.maximum(drop_up, rise_lo).max(axis=1)
        i = int(np.argmax(excess))
        if excess[i] > worst:
            worst, witness = float(excess[i]), P[i]
    if len(log) < 2:
        return _result("dominance", 0.0, None, tolerance, "single increment")
    detail = f"{len(log) - 1} consecutive pairs" + (" (hull vertices)" if shortcut else "")
    return _result("dominance", worst, witness, tolerance, detail)


# ---------------------------------------------------------------- oracle


def _slope_bound(P: np.ndarray, F: np.ndarray) -> float:
    """Largest finite-difference slope between any two points."""
    diff = P[:, None, :] - P[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    rise = np.abs(F[:, None] - F[None, :])
    mask = dist > 0
    return float((rise[mask] / dist[mask]).max()) if mask.any() else 0.0


def brute_force_separation(
    points,
    corners,
    resolution: int = 2001,
    *,
    slope_bound: float | None = None,
    refine: int = 12,
    allow_large: bool = False,
) -> float:
    """Smallest parallel-plane bracket width found by grid search over slopes.

    For a scalar output the optimal bracketing pair over points inside the
    corners' hull can always be taken parallel, so its gap is the spread of
    f - a.p minimised over slopes a. Slopes range over [-2L, 2L] with L the
    largest finite-difference slope; ``refine`` zoom rounds re-grid around the
    best slope (the spread is convex in a). Every value returned is attained by
    some feasible pair, hence never below the true optimum.
    """
    P, F = _split_points(points)
    if F.shape[1] != 1:
        raise ShapeMismatch("the brute-force oracle handles scalar-output functions only")
    F = F[:, 0]
    d = P.shape[1]
    C = np.asarray(corners, dtype=float).reshape(-1, d)
    if len(C) == 0:
        raise ValueError("need at least one corner")
    if not allow_large and (d > ORACLE_MAX_DIM or len(P) > ORACLE_MAX_POINTS):
        raise OracleScaleExceeded(
            f"oracle limited to d <= {ORACLE_MAX_DIM} and {ORACLE_MAX_POINTS} points, got d={d}, {len(P)} points"
        )
    if resolution < 3:
        raise ValueError("resolution must be at least 3")

    half = max(2.0 * (slope_bound if slope_bound is not None else _slope_bound(P, F)), 1.0)
    per_dim = resolution if d == 1 else max(9, int(round(math.sqrt(resolution))) | 1)

    def zoom(widths_of, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised 1D zoom search for ``count`` independent convex problems."""
        center = np.zeros(count)
        step = 2.0 * half / (per_dim - 1)
        best = np.full(count, math.inf)
        arg = np.zeros(count)
        for _ in range(refine + 1):
            grid = center[:, None] + (np.arange(per_dim) - (per_dim - 1) / 2) * step
            widths = widths_of(grid)
            i = np.argmin(widths, axis=1)
            rows = np.arange(count)
            better = widths[rows, i] < best
            best = np.where(better, widths[rows, i], best)
            arg = np.where(better, grid[rows, i], arg)
            center = arg
            step *= 4.0 / (per_dim - 1)  # the minimiser lies within one cell of the grid argmin
        return best, arg

    if d == 1:
        best, _ = zoom(lambda g: _kernels.separation_widths(P, F, g.reshape(-1, 1)).reshape(g.shape), 1)
        return float(best[0])

    def outer(g: np.ndarray) -> np.ndarray:
        a1 = g.reshape(-1)

        def inner(h: np.ndarray) -> np.ndarray:
            slopes = np.stack([np.repeat(a1, h.shape[1]), h.reshape(-1)], axis=1)
            return _kernels.separation_widths(P, F, slopes).reshape(h.shape)

        return zoom(inner, len(a1))[0].reshape(g.shape)

    best, _ = zoom(outer, 1)
    return float(best[0])


# ---------------------------------------------------------------- comparison


def compare_methods(
    mesh: UniformMesh,
    spec: FunctionSpec,
    config: AbstractionConfig,
    *,
    case: str = "",
    sandwich_subset: int | None = None,
    seed: int = 0,
) -> VerificationReport:
    """Run both methods; one-step may end as N/A under the memory cap."""
    report = VerificationReport(case or spec.name)
    inc = run_incremental(mesh, spec, config)
    report.results["incremental"] = inc
    try:
        one = run_onestep(
            mesh, spec, memory_cap=config.memory_cap, output_mode=config.output_mode, coupling=config.coupling
        )
        report.results["onestep"] = one
    except MemoryBudgetExceeded:
        one = None
    report.method_comparison = MethodComparison(
        theta_incremental=inc.final_theta,
        theta_onestep=None if one is None else one.final_theta,
        kappa=inc.kappa,
        peak_incremental=inc.peak_active_points,
        peak_onestep=None if one is None else one.peak_active_points,
        elapsed_incremental=inc.elapsed,
        elapsed_onestep=None if one is None else one.elapsed,
    )
    if one is not None:
        gap = one.final_theta - inc.final_theta
        report.checks.append(
            _result("suboptimality", gap, None, SUBOPTIMALITY_TOL, "theta_onestep - theta_incremental")
        )
    for name, result in report.results.items():
        check = check_grid_sandwich(result, mesh, spec, subset=sandwich_subset, seed=seed)
        check.check_id = f"grid_sandwich[{name}]"
        report.checks.append(check)
    report.checks.append(check_dominance(inc.log, mesh))
    return report


# ---------------------------------------------------------------- tables

TABLE_COLUMNS = ("case", "method", "budget", "kappa", "theta", "peak points", "seconds", "reference theta")


def _fmt(value) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def table_rows(report: VerificationReport, reference: dict | None = None) -> list[tuple]:
    reference = reference or {}
    cmp = report.method_comparison
    inc = report.results.get("incremental")
    rows = [
        (report.case, "onestep", "all", 1 if cmp.theta_onestep is not None else None, cmp.theta_onestep,
         cmp.peak_onestep, cmp.elapsed_onestep, reference.get("onestep")),
        (report.case, "incremental", inc.budget if inc else None, cmp.kappa, cmp.theta_incremental,
         cmp.peak_incremental, cmp.elapsed_incremental, reference.get("incremental")),
    ]
    return rows


def format_table(rows: Sequence[tuple], columns: Sequence[str] = TABLE_COLUMNS) -> str:
    cells = [list(columns)] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
