"""Random well-defined DSL expressions for property and fuzz tests."""

from __future__ import annotations

import numpy as np


def random_expression(rng: np.random.Generator, d: int, depth: int = 3) -> str:
    """Expression in x0..x{d-1} that is finite everywhere on [-2, 2]^d."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return f"x{rng.integers(d)}"
        return f"{rng.uniform(-3, 3):.3f}"
    a = random_expression(rng, d, depth - 1)
    b = random_expression(rng, d, depth - 1)
    choice = rng.integers(10)
    if choice == 0:
        return f"({a} + {b})"
    if choice == 1:
        return f"({a} - {b})"
    if choice == 2:
        return f"({a} * {b})"
    if choice == 3:
        return f"sin({a})"
    if choice == 4:
        return f"cos({a})"
    if choice == 5:
        return f"({a})^2"
    if choice == 6:
        return f"abs({a})"
    if choice == 7:
        return f"{a} / (2 + sin({b}))"
    if choice == 8:
        return f"exp(sin({a}))"
    return f"sqrt(1 + ({a})^2)"


def random_source(rng: np.random.Generator, d: int, outputs: int = 1, depth: int = 3) -> str:
    lines = [f"states: {d}"]
    lines += [f"f{i} = {random_expression(rng, d, depth)}" for i in range(outputs)]
    return "\n".join(lines) + "\n"
