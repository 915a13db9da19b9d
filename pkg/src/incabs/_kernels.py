"""Hot numeric loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics. The numba path is
used unless ``INCABS_DISABLE_NUMBA`` is set to a truthy value or numba cannot
be imported; ``BACKEND`` reports which one is active.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

_DISABLED = os.environ.get("INCABS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

_SLOPE_CHUNK = 4096


# ---------------------------------------------------------------- numpy path


def _rastrigin_np(pos: np.ndarray) -> np.ndarray:
    d = pos.shape[1]
    return 10.0 * d + np.sum(pos * pos - 10.0 * np.cos(2.0 * np.pi * pos), axis=1)


def _separation_widths_np(pos: np.ndarray, vals: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    out = np.empty(slopes.shape[0])
    for start in range(0, slopes.shape[0], _SLOPE_CHUNK):
        s = slopes[start : start + _SLOPE_CHUNK]
        resid = vals[None, :] - s @ pos.T
        out[start : start + len(s)] = resid.max(axis=1) - resid.min(axis=1)
    return out


def _bracket_violation_np(pos, vals, w_up, h_up, w_lo, h_lo):
    up = pos @ w_up.T + h_up
    lo = pos @ w_lo.T + h_lo
    viol = np.maximum(vals - up, lo - vals).max(axis=1)
    i = int(np.argmax(viol))
    return float(viol[i]), i


numpy_kernels = SimpleNamespace(
    rastrigin=_rastrigin_np,
    separation_widths=_separation_widths_np,
    bracket_violation=_bracket_violation_np,
)


# ---------------------------------------------------------------- numba path

if njit is not None:

    @njit(cache=True)
    def _rastrigin_nb(pos):
        n, d = pos.shape
        out = np.empty(n)
        two_pi = 2.0 * math.pi
        for i in range(n):
            acc = 10.0 * d
            for j in range(d):
                x = pos[i, j]
                acc += x * x - 10.0 * math.cos(two_pi * x)
            out[i] = acc
        return out

    @njit(cache=True)
    def _separation_widths_nb(pos, vals, slopes):
        n, d = pos.shape
        out = np.empty(slopes.shape[0])
        for s in range(slopes.shape[0]):
            hi = -np.inf
            lo = np.inf
            for i in range(n):
                r = vals[i]
                for j in range(d):
                    r -= slopes[s, j] * pos[i, j]
                if r > hi:
                    hi = r
                if r < lo:
                    lo = r
            out[s] = hi - lo
        return out

    @njit(cache=True)
    def _bracket_violation_core(pos, vals, w_up, h_up, w_lo, h_lo):
        n, d = pos.shape
        k = vals.shape[1]
        worst = -np.inf
        where = 0
        for i in range(n):
            for o in range(k):
                up = h_up[o]
                lo = h_lo[o]
                for j in range(d):
                    up += w_up[o, j] * pos[i, j]
                    lo += w_lo[o, j] * pos[i, j]
                v = vals[i, o] - up
                if lo - vals[i, o] > v:
                    v = lo - vals[i, o]
                if v > worst:
                    worst = v
                    where = i
        return worst, where

    def _bracket_violation_nb(pos, vals, w_up, h_up, w_lo, h_lo):
        worst, where = _bracket_violation_core(pos, vals, w_up, h_up, w_lo, h_lo)
        return float(worst), int(where)

    numba_kernels = SimpleNamespace(
        rastrigin=_rastrigin_nb,
        separation_widths=_separation_widths_nb,
        bracket_violation=_bracket_violation_nb,
    )
else:  # pragma: no cover
    numba_kernels = None

if numba_kernels is not None and not _DISABLED:
    BACKEND = "numba"
    _active = numba_kernels
else:
    BACKEND = "numpy"
    _active = numpy_kernels


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def rastrigin(pos: np.ndarray) -> np.ndarray:
    """Rastrigin value of each row of ``pos`` (shape (N, d))."""
    return _active.rastrigin(_f64(pos))


def separation_widths(pos: np.ndarray, vals: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """For each slope row, the spread max - min of ``vals - slope . pos``."""
    return _active.separation_widths(_f64(pos), _f64(vals), _f64(slopes))


def bracket_violation(pos, vals, w_up, h_up, w_lo, h_lo) -> tuple[float, int]:
    """Largest amount by which ``vals`` escapes the plane pair, and the row where it does.

    Non-positive results mean every point is bracketed.
    """
    pos = _f64(pos)
    if len(pos) == 0:
        return -math.inf, -1
    return _active.bracket_violation(
        pos, _f64(vals), _f64(w_up), _f64(h_up), _f64(w_lo), _f64(h_lo)
    )
