"""Linear programs for bracketing a sampled vector field between two affine maps.

Both the one-step program (all grid points at once) and the incremental
program share one assembly routine. Slopes are parametrised in the affine
hull of the participating points, centred at their bounding-box midpoint, so
directions the data cannot pin down get slope exactly zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import EmptyInput, Infeasible, NumericalFailure, ShapeMismatch, Unbounded
from .mesh import SamplePoint

FEASIBILITY_TOL = 1e-7
OBJECTIVE_RTOL = 1e-6
COUPLINGS = ("l1", "componentwise")


class RowTag(enum.IntEnum):
    SAMPLE = 0  # plane pair brackets f at a new sample
    EXTENSION = 1  # new planes enclose the previous ones at a carried vertex
    ERROR = 2  # plane gap at a vertex is at most theta


@dataclass(frozen=True)
class AffinePlanePair:
    """Upper map A_u x + B_u u + h_u and lower map A_l x + B_l u + h_l, with gap ``theta``."""

    A_upper: np.ndarray
    B_upper: np.ndarray
    h_upper: np.ndarray
    A_lower: np.ndarray
    B_lower: np.ndarray
    h_lower: np.ndarray
    theta: float

    @property
    def n_out(self) -> int:
        return self.h_upper.shape[0]

    @property
    def n(self) -> int:
        return self.A_upper.shape[1]

    @property
    def m(self) -> int:
        return self.B_upper.shape[1]

    @property
    def W_upper(self) -> np.ndarray:
        return np.hstack([self.A_upper, self.B_upper])

    @property
    def W_lower(self) -> np.ndarray:
        return np.hstack([self.A_lower, self.B_lower])

    def upper(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions, dtype=float) @ self.W_upper.T + self.h_upper

    def lower(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions, dtype=float) @ self.W_lower.T + self.h_lower

    def gap(self, positions: np.ndarray) -> np.ndarray:
        """1-norm of upper minus lower at each position."""
        return np.abs(self.upper(positions) - self.lower(positions)).sum(axis=1)

    @classmethod
    def from_weights(cls, W_up, h_up, W_lo, h_lo, n: int, theta: float) -> "AffinePlanePair":
        W_up = np.atleast_2d(np.asarray(W_up, dtype=float))
        W_lo = np.atleast_2d(np.asarray(W_lo, dtype=float))
        return cls(
            W_up[:, :n].copy(),
            W_up[:, n:].copy(),
            np.asarray(h_up, dtype=float).reshape(-1).copy(),
            W_lo[:, :n].copy(),
            W_lo[:, n:].copy(),
            np.asarray(h_lo, dtype=float).reshape(-1).copy(),
            float(theta),
        )

    def shifted(self, sigma: float) -> "AffinePlanePair":
        """Upper plane raised and lower plane dropped by ``sigma`` in every component."""
        return AffinePlanePair(
            self.A_upper,
            self.B_upper,
            self.h_upper + sigma,
            self.A_lower,
            self.B_lower,
            self.h_lower - sigma,
            self.theta + 2.0 * sigma * self.n_out,
        )

    def replicated(self, copies: int) -> "AffinePlanePair":
        """Stack a single-output pair ``copies`` times; the 1-norm gap scales accordingly."""
        rep = lambda a: np.repeat(a, copies, axis=0)
        return AffinePlanePair(
            rep(self.A_upper), rep(self.B_upper), rep(self.h_upper),
            rep(self.A_lower), rep(self.B_lower), rep(self.h_lower),
            self.theta * copies,
        )

    def allclose(self, other: "AffinePlanePair", atol: float = 0.0) -> bool:
        pairs = zip(self._arrays(), other._arrays())
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0, atol=atol) for a, b in pairs)

    def _arrays(self):
        return (self.A_upper, self.B_upper, self.h_upper, self.A_lower, self.B_lower, self.h_lower)


@dataclass
class LinearProgram:
    """min theta subject to sparse rows ``matrix @ vars <= rhs``.

    Variables per output ``i`` are the upper slope (in hull coordinates),
    upper offset, lower slope and lower offset; ``theta`` is last.
    """

    n: int
    m: int
    n_out: int
    matrix: sp.csr_matrix
    rhs: np.ndarray
    tags: np.ndarray
    row_output: np.ndarray  # output component each row constrains (-1 for coupled rows)
    row_side: np.ndarray  # +1 upper plane, -1 lower plane, 0 gap row
    basis: np.ndarray  # (d, r) orthonormal directions of the data's affine hull
    center: np.ndarray  # (d,)
    coupling: str = "l1"
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.n + self.m

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def num_vars(self) -> int:
        return 2 * self.n_out * (self.rank + 1) + 1

    @property
    def theta_index(self) -> int:
        return self.num_vars - 1

    @property
    def variables(self) -> list[str]:
        names = []
        for i in range(self.n_out):
            names += [f"wu{i}_{j}" for j in range(self.rank)] + [f"hu{i}"]
            names += [f"wl{i}_{j}" for j in range(self.rank)] + [f"hl{i}"]
        return names + ["theta"]

    def count(self, tag: RowTag) -> int:
        return int(np.sum(self.tags == tag))


@dataclass(frozen=True)
class SolveReport:
    status: str  # optimal | infeasible | unbounded | numerical_failure
    objective: float
    iterations: int
    max_constraint_violation: float
    repair_shift: float = 0.0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "max_constraint_violation": self.max_constraint_violation,
            "repair_shift": self.repair_shift,
        }


# ---------------------------------------------------------------- assembly


def _split_points(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], SamplePoint):
        P, F = points
        P = np.asarray(P, dtype=float)
        F = np.asarray(F, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if F.ndim == 1:
            F = F[:, None]
        if len(P) != len(F):
            raise ShapeMismatch(f"{len(P)} positions but {len(F)} values")
        return P, F
    pts = list(points)
    if not pts:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return (
        np.array([p.position for p in pts], dtype=float),
        np.array([p.value for p in pts], dtype=float),
    )


def _positions(corners) -> np.ndarray:
    if isinstance(corners, np.ndarray):
        return corners.astype(float).reshape(len(corners), -1) if corners.size else corners.astype(float)
    items = list(corners)
    if not items:
        return np.zeros((0, 0))
    return np.array([c.position if isinstance(c, SamplePoint) else c for c in items], dtype=float).reshape(len(items), -1)


def hull_frame(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centre and orthonormal basis of the affine hull of ``positions``."""
    d = positions.shape[1]
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    center = 0.5 * (lo + hi)
    live = np.flatnonzero(hi > lo)
    if live.size == 0:
        return center, np.zeros((d, 0))
    D = positions[:, live] - center[live]
    scale = np.abs(D).max(axis=0)
    s = np.linalg.svd(D / scale, compute_uv=False)
    rank = int(np.sum(s > s[0] * 1e-10))
    if rank == live.size:
        basis = np.zeros((d, live.size))
        basis[live, np.arange(live.size)] = 1.0
        return center, basis
    # oblique degenerate hull: orthonormal directions from the SVD
    _, _, vt = np.linalg.svd(D, full_matrices=False)
    basis = np.zeros((d, rank))
    basis[live, :] = vt[:rank].T
    return center, basis


def _assemble(
    P_new: np.ndarray,
    F_new: np.ndarray,
    P_prev: np.ndarray,
    up_prev: np.ndarray,
    lo_prev: np.ndarray,
    P_vert: np.ndarray,
    n: int,
    coupling: str,
) -> LinearProgram:
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}, got {coupling!r}")
    d = P_new.shape[1]
    n_out = F_new.shape[1]
    allpos = np.vstack([P_new, P_prev.reshape(-1, d), P_vert.reshape(-1, d)])
    center, basis = hull_frame(allpos)
    r = basis.shape[1]
    blk = 2 * (r + 1)
    nvar = n_out * blk + 1
    theta = nvar - 1

    rows, cols, vals, rhs, tags, outs, sides = [], [], [], [], [], [], []
    nrow = 0

    def add_bracket(Z, targets, tag):
        nonlocal nrow
        N = len(Z)
        if N == 0:
            return
        ones = np.ones((N, 1))
        ZZ = np.hstack([Z, ones])
        for i in range(n_out):
            for side, off in ((1, i * blk), (-1, i * blk + r + 1)):
                rr = nrow + np.repeat(np.arange(N), r + 1)
                cc = np.tile(off + np.arange(r + 1), N)
                rows.append(rr)
                cols.append(cc)
                vals.append((-side * ZZ).ravel())
                rhs.append(-side * targets[side][:, i])
                tags.append(np.full(N, tag, dtype=np.int8))
                outs.append(np.full(N, i))
                sides.append(np.full(N, side, dtype=np.int8))
                nrow += N

    Z_new = (P_new - center) @ basis
    add_bracket(Z_new, {1: F_new, -1: F_new}, RowTag.SAMPLE)
    if len(P_prev):
        Z_prev = (P_prev - center) @ basis
        add_bracket(Z_prev, {1: up_prev, -1: lo_prev}, RowTag.EXTENSION)

    V = len(P_vert)
    if V:
        Z_v = np.hstack([(P_vert - center) @ basis, np.ones((V, 1))])
        groups = [list(range(n_out))] if coupling == "l1" else [[i] for i in range(n_out)]
        for g in groups:
            rr, cc, vv = [], [], []
            for i in g:
                rr.append(np.repeat(np.arange(V), r + 1))
                cc.append(np.tile(i * blk + np.arange(r + 1), V))
                vv.append(Z_v.ravel())
                rr.append(np.repeat(np.arange(V), r + 1))
                cc.append(np.tile(i * blk + r + 1 + np.arange(r + 1), V))
                vv.append(-Z_v.ravel())
            rr.append(np.arange(V))
            cc.append(np.full(V, theta))
            vv.append(-np.ones(V))
            rows.append(nrow + np.concatenate(rr))
            cols.append(np.concatenate(cc))
            vals.append(np.concatenate(vv))
            rhs.append(np.zeros(V))
            tags.append(np.full(V, RowTag.ERROR, dtype=np.int8))
            outs.append(np.full(V, g[0] if len(g) == 1 else -1))
            sides.append(np.zeros(V, dtype=np.int8))
            nrow += V

    if nrow:
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nrow, nvar)
        )
        b = np.concatenate(rhs)
        t = np.concatenate(tags)
        o = np.concatenate(outs)
        s = np.concatenate(sides)
    else:
        A = sp.csr_matrix((0, nvar))
        b = np.zeros(0)
        t = np.zeros(0, dtype=np.int8)
        o = np.zeros(0, dtype=int)
        s = np.zeros(0, dtype=np.int8)
    return LinearProgram(n, d - n, n_out, A, b, t, o, s, basis, center, coupling)


def build_onestep_program(points, corners, n: int | None = None, coupling: str = "l1") -> LinearProgram:
    """Bracket f at every point, with the gap bounded at ``corners``.

    ``points`` is a list of :class:`SamplePoint` or a ``(positions, values)``
    pair; ``n`` is the number of state coordinates (defaults to all of them).
    """
    P, F = _split_points(points)
    if len(P) == 0:
        raise EmptyInput("one-step program needs at least one sample point")
    C = _positions(corners)
    if len(C) and C.shape[1] != P.shape[1]:
        raise ShapeMismatch(f"corners have dimension {C.shape[1]}, points {P.shape[1]}")
    n = P.shape[1] if n is None else n
    empty = np.zeros((0, P.shape[1]))
    return _assemble(P, F, empty, np.zeros((0, F.shape[1])), np.zeros((0, F.shape[1])), C, n, coupling)


def build_incremental_program(
    new_points,
    prev_corners,
    prev_planes: AffinePlanePair,
    new_corners,
    coupling: str = "l1",
) -> LinearProgram:
    """Bracket f at the new points, enclose ``prev_planes`` at ``prev_corners``, gap at ``new_corners``.

    Only the positions of ``prev_corners`` are used.
    """
    P, F = _split_points(new_points)
    if len(P) == 0:
        raise EmptyInput("an increment needs at least one new grid point")
    d = P.shape[1]
    if prev_planes.n + prev_planes.m != d or prev_planes.n_out != F.shape[1]:
        raise ShapeMismatch(
            f"previous planes map R^{prev_planes.n + prev_planes.m} -> R^{prev_planes.n_out}, "
            f"samples are R^{d} -> R^{F.shape[1]}"
        )
    Q = _positions(prev_corners)
    V = _positions(new_corners)
    for name, arr in (("previous corners", Q), ("new corners", V)):
        if len(arr) and arr.shape[1] != d:
            raise ShapeMismatch(f"{name} have dimension {arr.shape[1]}, samples {d}")
    Q = Q.reshape(-1, d)
    return _assemble(P, F, Q, prev_planes.upper(Q), prev_planes.lower(Q), V.reshape(-1, d), prev_planes.n, coupling)


# ---------------------------------------------------------------- solving


def solve_lp(program: LinearProgram) -> tuple[AffinePlanePair, SolveReport]:
    """Solve with HiGHS dual simplex, then tighten offsets so every bracket row holds."""
    nvar = program.num_vars
    c = np.zeros(nvar)
    c[program.theta_index] = 1.0
    bounds = [(None, None)] * (nvar - 1) + [(0, None)]
    A = program.matrix if program.matrix.shape[0] else None
    b = program.rhs if program.matrix.shape[0] else None
    res = linprog(
        c,
        A_ub=A,
        b_ub=b,
        bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 2:
        raise Infeasible(f"LP reported infeasible: {res.message}")
    if res.status == 3:
        raise Unbounded(f"LP reported unbounded: {res.message}")
    if res.status != 0 or res.x is None:
        raise NumericalFailure(f"LP solver failed (status {res.status}): {res.message}")

    x = np.array(res.x, dtype=float)
    r = program.rank
    blk = 2 * (r + 1)
    lhs = program.matrix @ x if program.matrix.shape[0] else np.zeros(0)
    resid = lhs - program.rhs

    # push offsets outward by any residual bracket violation
    shift = 0.0
    bracket = program.row_side != 0
    for i in range(program.n_out):
        for side, col in ((1, i * blk + r), (-1, i * blk + 2 * r + 1)):
            mask = bracket & (program.row_output == i) & (program.row_side == side)
            if not mask.any():
                continue
            worst = float(resid[mask].max())
            if worst > 0:
                x[col] += side * worst
                shift = max(shift, worst)

    gap_rows = program.tags == RowTag.ERROR
    if gap_rows.any():
        xg = x.copy()
        xg[program.theta_index] = 0.0
        gaps = program.matrix[gap_rows] @ xg
        theta = max(0.0, float(gaps.max()))
    else:
        theta = 0.0
    x[program.theta_index] = theta
    final = program.matrix @ x - program.rhs if program.matrix.shape[0] else np.zeros(0)
    violation = float(max(final.max(initial=0.0), 0.0))

    W_up = np.zeros((program.n_out, program.dim))
    W_lo = np.zeros((program.n_out, program.dim))
    h_up = np.zeros(program.n_out)
    h_lo = np.zeros(program.n_out)
    for i in range(program.n_out):
        base = i * blk
        wu = program.basis @ x[base : base + r]
        wl = program.basis @ x[base + r + 1 : base + 2 * r + 1]
        W_up[i] = wu
        W_lo[i] = wl
        h_up[i] = x[base + r] - wu @ program.center
        h_lo[i] = x[base + 2 * r + 1] - wl @ program.center
    planes = AffinePlanePair.from_weights(W_up + 0.0, h_up + 0.0, W_lo + 0.0, h_lo + 0.0, program.n, theta)
    report = SolveReport(
        "optimal",
        float(res.fun),
        int(getattr(res, "nit", 0) or 0),
        violation,
        repair_shift=shift,
    )
    return planes, report


# ---------------------------------------------------------------- export


def write_mps(program: LinearProgram, path, name: str = "INCABS") -> None:
    """Write the program in free-format MPS (all rows are <=, variables free except theta >= 0)."""
    names = program.variables
    A = program.matrix.tocsc()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"NAME {name}\nROWS\n N obj\n")
        for k in range(A.shape[0]):
            fh.write(f" L r{k}\n")
        fh.write("COLUMNS\n")
        for j, var in enumerate(names):
            start, end = A.indptr[j], A.indptr[j + 1]
            if j == program.theta_index:
                fh.write(f" {var} obj 1\n")
            for k, v in zip(A.indices[start:end], A.data[start:end]):
                fh.write(f" {var} r{k} {v!r}\n")
        fh.write("RHS\n")
        for k, v in enumerate(program.rhs):
            if v != 0:
                fh.write(f" rhs r{k} {float(v)!r}\n")
        fh.write("BOUNDS\n")
        for j, var in enumerate(names):
            if j != program.theta_index:
                fh.write(f" FR bnd {var}\n")
        fh.write("ENDATA\n")
