"""Shared finite-difference oracles for derivative tests."""

import numpy as np
import pytest


def central_diff(f, x, h=1e-6):
    """Central-difference gradient of scalar or vector f at x (per coordinate)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def rel_err(approx, ref):
    """Max-abs error scaled by the max-abs reference entry."""
    approx = np.asarray(approx, dtype=float)
    ref = np.asarray(ref, dtype=float)
    scale = np.max(np.abs(ref))
    if scale == 0.0:
        return float(np.max(np.abs(approx)))
    return float(np.max(np.abs(approx - ref)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
