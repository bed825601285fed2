"""Jet algebra: exact first/second derivatives through composed arithmetic."""

import numpy as np
import pytest

from smc2.jets import Jet, clamp, seed_params

from conftest import central_diff, rel_err


def _expression(theta_jets, z):
    """Representative mix of ops: +, -, *, /, sqrt, constants, batching."""
    a, b, c = theta_jets
    s = a * a + b * b + 2.5
    ratio = (a * b) / s
    return ratio * z + (c * c / s).sqrt() * (z - 0.25) - 3.0 * ratio + b / 2.0


def _value_fn(z):
    def f(theta):
        jets = seed_params(theta, order=0)
        return _expression(jets, z).v

    return f


def test_gradient_matches_finite_differences(rng):
    z = rng.standard_normal(7)
    theta = np.array([0.8, 1.3, 0.6])
    out = _expression(seed_params(theta, order=2), z)
    fd_grad = central_diff(_value_fn(z), theta)
    assert rel_err(out.g, fd_grad) < 1e-8


def test_hessian_matches_finite_differences_and_is_symmetric(rng):
    z = rng.standard_normal(5)
    theta = np.array([0.9, 0.7, 1.4])

    def grad_fn(th):
        return _expression(seed_params(th, order=1), z).g

    out = _expression(seed_params(theta, order=2), z)
    fd_hess = central_diff(grad_fn, theta)
    assert rel_err(out.h, fd_hess) < 1e-6
    assert np.allclose(out.h, np.swapaxes(out.h, -1, -2), atol=0, rtol=0)


def test_order_controls_payload():
    theta = np.array([0.5, 0.25])
    for order in (0, 1, 2):
        out = seed_params(theta, order)[0] * 2.0
        assert out.order == order


def test_seed_params_identity_derivatives():
    jets = seed_params([0.3, 0.6], order=2)
    assert jets[0].v == 0.3 and jets[1].v == 0.6
    assert np.array_equal(jets[0].g, [1.0, 0.0])
    assert np.array_equal(jets[1].g, [0.0, 1.0])
    assert not jets[0].h.any()


def test_constants_do_not_reduce_order(rng):
    (a,) = seed_params([2.0], order=2)
    batch = rng.standard_normal(4)
    out = a * batch + 1.0
    assert out.order == 2
    assert np.allclose(out.g[..., 0], batch)


def test_division_and_reciprocal(rng):
    a, b = seed_params([1.7, 0.4], order=2)
    expr = 1.0 / (a + b * b)

    def f(theta):
        x, y = theta
        return 1.0 / (x + y * y)

    theta = np.array([1.7, 0.4])
    assert np.isclose(expr.v, f(theta))
    assert rel_err(expr.g, central_diff(f, theta)) < 1e-8


def test_take_gathers_all_payloads(rng):
    (a,) = seed_params([1.0], order=2)
    batch = a * rng.standard_normal(6)
    idx = np.array([5, 0, 0, 2])
    sub = batch.take(idx)
    assert np.array_equal(sub.v, batch.v[idx])
    assert np.array_equal(sub.g, batch.g[idx])
    assert np.array_equal(sub.h, batch.h[idx])


def test_clamp_zeroes_derivatives_only_where_active():
    (a,) = seed_params([2.0], order=2)
    x = a * np.array([-1.0, 0.1, 1.0])  # values -2, 0.2, 2
    clipped = clamp(x, 0.0, 1.0)
    assert np.array_equal(clipped.v, [0.0, 0.2, 1.0])
    assert not clipped.g[0].any() and not clipped.g[2].any()
    assert clipped.g[1, 0] == pytest.approx(0.1)
    assert not clipped.h[0].any() and not clipped.h[2].any()
