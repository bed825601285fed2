"""Linear Gaussian state-space model with θ = (μ, φ, σ).

Dynamics x_t ~ N(μ x_{t-1}, φ²), observations y_t ~ N(x_t, σ²), x_0 = 0.
The particle filter uses the closed-form locally optimal proposal

    q(x_t | x_{t-1}, y_t) = N(ρ² [σ⁻² y_t + φ⁻² μ x_{t-1}], ρ²),
    ρ⁻² = φ⁻² + σ⁻²,

whose incremental weight is the one-step predictive
p(y_t | x_{t-1}) = N(y_t; μ x_{t-1}, φ² + σ²).  Written with explicit noise,
the proposal is x_t = a(θ) y_t + b(θ) x_{t-1} + ρ(θ) z with a = φ²/(φ²+σ²)
and b = μσ²/(φ²+σ²); all θ-derivatives flow through a, b, ρ and the previous
state via the jet algebra.

A Kalman filter over the same initialization gives the exact log-likelihood
and serves as the independent oracle in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..jets import Jet, seed_params
from ..linalg import LOG_2PI
from .base import PriorSpec, StateSpaceModel, gaussian_logpdf_channels

__all__ = ["Lgss", "kalman_loglik"]


@dataclass
class _LgssContext:
    mu: Jet
    phi: Jet
    sigma: Jet
    a_y: Jet       # proposal coefficient on y_t
    b_x: Jet       # proposal coefficient on x_{t-1}
    scale: Jet     # proposal noise scale rho
    pred_var: Jet  # predictive variance phi^2 + sigma^2
    order: int


class Lgss(StateSpaceModel):
    name = "lgss"
    theta_names = ("mu", "phi", "sigma")
    noise_dim = 1

    def default_truth(self):
        return np.array([0.75, 1.0, 1.0])

    def default_prior(self):
        return PriorSpec(lows=(0.0, 0.0, 0.0), highs=(1.0, 2.0, 2.0))

    def prepare(self, theta, order):
        mu, phi, sigma = seed_params(theta, order)
        phi2 = phi * phi
        sigma2 = sigma * sigma
        total = phi2 + sigma2
        return _LgssContext(
            mu=mu,
            phi=phi,
            sigma=sigma,
            a_y=phi2 / total,
            b_x=mu * sigma2 / total,
            scale=(phi2 * sigma2 / total).sqrt(),
            pred_var=total,
            order=order,
        )

    def init_state(self, n, order):
        d = self.dim
        g = np.zeros((n, d)) if order >= 1 else None
        h = np.zeros((n, d, d)) if order >= 2 else None
        return (Jet(np.zeros(n), g, h),)

    def propagate(self, ctx, state, noise):
        (x,) = state
        return (ctx.mu * x + ctx.phi * noise,)

    def optimal_proposal(self, ctx, x: Jet, y_t: float, noise) -> Jet:
        return ctx.a_y * y_t + ctx.b_x * x + ctx.scale * noise

    def weight_logdensity(self, ctx, x_prev: Jet, y_t: float) -> Jet:
        return gaussian_logpdf_channels(y_t, ctx.mu * x_prev, ctx.pred_var)

    def pf_step(self, ctx, state, y_t, noise):
        (x,) = state
        incr = self.weight_logdensity(ctx, x, y_t)
        return (self.optimal_proposal(ctx, x, y_t, noise),), incr

    def simulate(self, true_theta, t_steps, rng):
        mu, phi, sigma = true_theta
        state_noise = rng.standard_normal(t_steps)
        obs_noise = rng.standard_normal(t_steps)
        x = 0.0
        y = np.empty(t_steps)
        for t in range(t_steps):
            x = mu * x + phi * state_noise[t]
            y[t] = x + sigma * obs_noise[t]
        return y


def kalman_loglik(theta, observations) -> float:
    """Exact log p(y_{1:T} | θ) by the prediction-error decomposition.

    Uses the same initialization as the particle filter: x_0 = 0 known, so
    the first predictive is N(0, φ² + σ²).
    """
    mu, phi, sigma = (float(v) for v in theta)
    q = phi * phi
    r = sigma * sigma
    mean_pred = 0.0
    var_pred = q
    total = 0.0
    for y_t in np.asarray(observations, dtype=float):
        innov_var = var_pred + r
        resid = y_t - mean_pred
        total += -0.5 * (LOG_2PI + math.log(innov_var) + resid * resid / innov_var)
        gain = var_pred / innov_var
        mean_filt = mean_pred + gain * resid
        var_filt = (1.0 - gain) * var_pred
        mean_pred = mu * mean_filt
        var_pred = mu * mu * var_filt + q
    return total
