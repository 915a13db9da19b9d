import math
import os
import subprocess
import sys

import numpy as np
import pytest

from incabs import _kernels

pytestmark = pytest.mark.skipif(_kernels.numba_kernels is None, reason="numba not installed")


def test_rastrigin_backends_agree(rng):
    P = rng.uniform(-5.1, 5.1, (1000, 4))
    assert np.allclose(_kernels.numba_kernels.rastrigin(P), _kernels.numpy_kernels.rastrigin(P), rtol=1e-13, atol=1e-12)


def test_separation_widths_backends_agree(rng):
    P = rng.uniform(-1, 1, (150, 2))
    F = np.sin(3 * P).sum(axis=1)
    S = rng.uniform(-5, 5, (5000, 2))
    a = _kernels.numba_kernels.separation_widths(P, F, S)
    b = _kernels.numpy_kernels.separation_widths(P, F, S)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_bracket_violation_backends_agree(rng):
    P = rng.uniform(-1, 1, (300, 3))
    F = rng.normal(size=(300, 2))
    W = rng.normal(size=(2, 3))
    h_up, h_lo = np.full(2, 1.0), np.full(2, -1.0)
    a = _kernels.numba_kernels.bracket_violation(P, F, W, h_up, W, h_lo)
    b = _kernels.numpy_kernels.bracket_violation(P, F, W, h_up, W, h_lo)
    assert a[0] == pytest.approx(b[0], abs=1e-12) and a[1] == b[1]


def test_empty_bracket_input():
    assert _kernels.bracket_violation(np.empty((0, 1)), np.empty((0, 1)), np.zeros((1, 1)), [0.0], np.zeros((1, 1)), [0.0]) == (-math.inf, -1)


def test_env_flag_selects_numpy():
    env = dict(os.environ, INCABS_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import incabs; print(incabs.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
