from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from ..errors import ArityMismatch, DomainError, ShapeMismatch
from . import dsl


class Smoothness(str, enum.Enum):
    """Regularity class of f, selecting the interpolation-error bound."""

    C0 = "C0"
    LIPSCHITZ = "lipschitz"
    C1 = "C1"
    C2 = "C2"

    @classmethod
    def parse(cls, value: "str | Smoothness") -> "Smoothness":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == key or member.name.lower() == key:
                return member
        raise ValueError(f"unknown smoothness class {value!r}")


@dataclass(frozen=True)
class BuiltinId:
    name: str
    params: tuple[tuple[str, Any], ...]

    def param(self, key: str, default=None):
        return dict(self.params).get(key, default)


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """A vector field f(x, u) with ``n`` states, ``m`` inputs and ``n_out`` outputs.

    ``body`` is either a :class:`BuiltinId` or a tuple of expression trees,
    one per output component.
    """

    n: int
    m: int
    n_out: int
    body: BuiltinId | tuple
    smoothness: Smoothness | None = None
    smoothness_constant: float | None = None
    constant_source: str | None = None  # "user_supplied" or "estimated"
    _impl: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def arity_in(self) -> int:
        return self.n + self.m

    @property
    def name(self) -> str:
        if isinstance(self.body, BuiltinId):
            return self.body.name
        return "dsl"

    @property
    def is_builtin(self) -> bool:
        return isinstance(self.body, BuiltinId)

    def with_smoothness(self, cls: Smoothness | str, constant: float | None, source: str = "user_supplied") -> "FunctionSpec":
        if constant is not None and not constant >= 0:
            raise ValueError(f"smoothness constant must be non-negative, got {constant}")
        return replace(self, smoothness=Smoothness.parse(cls), smoothness_constant=constant, constant_source=source)

    def evaluate_many(self, positions: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``positions``; returns shape (N, n_out)."""
        P = np.asarray(positions, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.arity_in:
            raise ShapeMismatch(f"expected positions of shape (N, {self.arity_in}), got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise DomainError("non-finite position")
        if self._impl is not None:
            out = self._impl(P)
        else:
            out = np.stack([dsl.evaluate_expr(c, P, self.n) for c in self.body], axis=1)
        out = np.asarray(out, dtype=float).reshape(len(P), self.n_out)
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
            raise DomainError(f"non-finite value of f at position {P[bad].tolist()}")
        return out

    def source(self) -> str:
        if self.is_builtin:
            raise TypeError("builtin functions have no DSL source")
        return dsl.format_source(self.body, self.n, self.m)


def parse_function_spec(text: str) -> FunctionSpec:
    parsed = dsl.parse_source(text)
    return FunctionSpec(parsed.n, parsed.m, len(parsed.components), parsed.components)


def evaluate(spec: FunctionSpec, position) -> np.ndarray:
    p = np.asarray(position, dtype=float).reshape(-1)
    if p.size != spec.arity_in:
        raise ArityMismatch(f"position has {p.size} entries, f takes {spec.arity_in}")
    return spec.evaluate_many(p[None, :])[0]
