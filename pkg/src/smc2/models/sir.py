"""Stochastic discrete-time SIR model with θ = (β, γ) and Poisson counts.

Compartment updates per step (R_t closed by R_t = N_pop - S_t - I_t):

    S_t = S_{t-1} - β I_{t-1} S_{t-1} + ε_β
    I_t = I_{t-1} + β I_{t-1} S_{t-1} - γ I_{t-1} - ε_β + ε_γ

with ε_β, ε_γ ~ N(0, noise_var) i.i.d. per step.  Observations are Poisson
counts of the infected compartment, y_t ~ Poisson(I_t).  To keep the Poisson
mean positive under the additive noise, I_t is floored at ``i_min`` and S_t
clipped to [0, N_pop] inside the step, with derivatives zeroed wherever a
clamp is active.  The bilinear βIS term is propagated exactly by the jet
algebra, so per-particle d(S,I)/dθ and d²(S,I)/dθ² are available for the
weight derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..jets import Jet, clamp, seed_params
from .base import PriorSpec, StateSpaceModel

__all__ = ["Sir", "poisson_logpmf_channels"]


def poisson_logpmf_channels(y: float, mean: Jet) -> Jet:
    """log Poisson(y; I(θ)) with derivatives through the mean jet.

    value = y log I - I - log Γ(y+1)
    grad  = (y/I - 1) I'
    hess  = (y/I - 1) I'' - (y/I²) I'I'ᵀ
    """
    iv = mean.v
    value = y * np.log(iv) - iv - gammaln(y + 1.0)
    if mean.g is None:
        return Jet(value)
    ratio = y / iv - 1.0
    grad = ratio[..., None] * mean.g
    if mean.h is None:
        return Jet(value, grad)
    outer = mean.g[..., :, None] * mean.g[..., None, :]
    hess = ratio[..., None, None] * mean.h - (y / (iv * iv))[..., None, None] * outer
    return Jet(value, grad, hess)


@dataclass
class _SirContext:
    beta: Jet
    gamma: Jet
    order: int


class Sir(StateSpaceModel):
    name = "sir"
    theta_names = ("beta", "gamma")
    noise_dim = 2
    integer_observations = True

    def __init__(self, n_pop: float = 763.0, i_init: float = 1.0,
                 noise_var: float = 0.5, i_min: float = 1e-6):
        self.n_pop = float(n_pop)
        self.i_init = float(i_init)
        self.noise_var = float(noise_var)
        self.noise_std = float(np.sqrt(noise_var))
        self.i_min = float(i_min)

    def default_truth(self):
        return np.array([0.6, 0.3])

    def default_prior(self):
        return PriorSpec(lows=(0.0, 0.0), highs=(1.0, 1.0))

    def prepare(self, theta, order):
        beta, gamma = seed_params(theta, order)
        return _SirContext(beta=beta, gamma=gamma, order=order)

    def init_state(self, n, order):
        d = self.dim
        def const(value):
            g = np.zeros((n, d)) if order >= 1 else None
            h = np.zeros((n, d, d)) if order >= 2 else None
            return Jet(np.full(n, value), g, h)
        return (const(self.n_pop - self.i_init), const(self.i_init))

    def propagate(self, ctx, state, noise):
        s, i = state
        noise = np.asarray(noise, dtype=float)
        eps_b = self.noise_std * noise[..., 0]
        eps_g = self.noise_std * noise[..., 1]
        flow = ctx.beta * i * s
        s_new = clamp(s - flow + eps_b, 0.0, self.n_pop)
        i_new = clamp(i + flow - ctx.gamma * i - eps_b + eps_g, self.i_min, None)
        return (s_new, i_new)

    def pf_step(self, ctx, state, y_t, noise):
        new_state = self.propagate(ctx, state, noise)
        return new_state, poisson_logpmf_channels(float(y_t), new_state[1])

    def simulate(self, true_theta, t_steps, rng):
        beta, gamma = true_theta
        noise = self.noise_std * rng.standard_normal((t_steps, 2))
        s = self.n_pop - self.i_init
        i = self.i_init
        means = np.empty(t_steps)
        for t in range(t_steps):
            flow = beta * i * s
            s = min(max(s - flow + noise[t, 0], 0.0), self.n_pop)
            i = max(i + flow - gamma * i - noise[t, 0] + noise[t, 1], self.i_min)
            means[t] = i
        return rng.poisson(means).astype(np.int64)
