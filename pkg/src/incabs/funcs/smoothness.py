from __future__ import annotations

import numpy as np

from ..mesh import DomainBox
from .spec import FunctionSpec, Smoothness

SAFETY_FACTOR = 1.2
MIN_SAMPLES = 1000


def _jacobians(spec: FunctionSpec, P: np.ndarray, h: np.ndarray) -> np.ndarray:
    d = spec.arity_in
    J = np.empty((len(P), spec.n_out, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h[j]
        J[:, :, j] = (spec.evaluate_many(P + step) - spec.evaluate_many(P - step)) / (2 * h[j])
    return J


def _hessians(spec: FunctionSpec, P: np.ndarray, h: np.ndarray) -> np.ndarray:
    d = spec.arity_in
    H = np.empty((len(P), spec.n_out, d, d))
    f0 = spec.evaluate_many(P)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[:, :, i, i] = (spec.evaluate_many(P + ei) - 2 * f0 + spec.evaluate_many(P - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            mixed = (
                spec.evaluate_many(P + ei + ej)
                - spec.evaluate_many(P + ei - ej)
                - spec.evaluate_many(P - ei + ej)
                + spec.evaluate_many(P - ei - ej)
            ) / (4 * h[i] * h[j])
            H[:, :, i, j] = H[:, :, j, i] = mixed
    return H


def estimate_smoothness_bound(
    spec: FunctionSpec,
    domain: DomainBox,
    cls: Smoothness | str,
    samples: int = MIN_SAMPLES,
    seed: int = 0,
) -> float:
    """Sampled finite-difference estimate of the smoothness constant, times 1.2.

    Lipschitz, C0 and C1 use the largest Jacobian spectral norm; C2 the largest
    Hessian spectral norm over all output components. The result is a
    heuristic and carries no soundness guarantee.
    """
    cls = Smoothness.parse(cls)
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    width = hi - lo
    h = (1e-6 if cls is not Smoothness.C2 else 1e-4) * width
    rng = np.random.default_rng(seed)
    # keep stencils inside the domain
    P = (lo + 2 * h) + (width - 4 * h) * rng.random((samples, domain.dim))
    if cls is Smoothness.C2:
        H = _hessians(spec, P, h)
        worst = float(np.max(np.linalg.norm(H, ord=2, axis=(2, 3))))
    else:
        J = _jacobians(spec, P, h)
        worst = float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))
    return SAFETY_FACTOR * worst


def estimated_spec(spec: FunctionSpec, domain: DomainBox, cls: Smoothness | str, samples: int = MIN_SAMPLES, seed: int = 0) -> FunctionSpec:
    value = estimate_smoothness_bound(spec, domain, cls, samples, seed)
    return spec.with_smoothness(cls, value, source="estimated")
