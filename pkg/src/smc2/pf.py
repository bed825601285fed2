"""Common-random-number differentiable particle filter.

Runs N_x particles through a state-space model under noise fixed by keyed
CRN streams, so the returned log-likelihood estimate is a deterministic,
piecewise-smooth function of θ.  On request it also returns the exact first
and second derivatives of that function:

* per-particle log-weights accumulate the incremental observation
  log-density and its dθ / d²θ derivatives (carried by the model's jets),
* at every normalization boundary (an ESS-triggered resample, or the final
  time step) the block's contribution is folded into running totals:

      grad  += Σ_j w̃_j ∇logw_j
      hess  += Σ_j w̃_j ∇²logw_j + Σ_j w̃_j (∇logw_j − m)(∇logw_j − m)ᵀ

  with m the weighted mean of ∇logw — the two-term estimator of the
  log-likelihood Hessian in normalized-weight form,
* resampled children inherit the parent's full state derivatives while the
  per-particle log-weight derivatives restart at zero, which is exactly the
  derivative of the frozen-index estimator (finite differences of the
  log-likelihood under identical streams reproduce the gradient, and of the
  gradient the Hessian).

Resampling is systematic; the per-step uniform draw is consumed from its own
stream whether or not resampling fires, so streams stay aligned across small
θ perturbations.  The returned Hessian uses the negative-Hessian convention
(−∇² log p̂), the quantity the second-order proposal inverts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import symmetrize
from .models.base import select_state

__all__ = [
    "DegenerateCloud",
    "LogLikEstimate",
    "ParticleCloud",
    "normalize_log_weights",
    "effective_sample_size",
    "systematic_resample_indices",
    "run_pf",
]


class DegenerateCloud(RuntimeError):
    """All particle weights underflowed to zero."""


@dataclass
class LogLikEstimate:
    """PF output: log-likelihood, optional gradient and negative Hessian."""

    loglik: float
    grad: np.ndarray | None = None
    neg_hess: np.ndarray | None = None

    @property
    def alive(self) -> bool:
        return np.isfinite(self.loglik)


def normalize_log_weights(log_weights):
    """Log-sum-exp stabilized normalization.

    Returns (weights summing to one, log mean weight); the latter is the
    per-block likelihood increment log[(1/N) Σ_j w_j].

    Raises
    ------
    DegenerateCloud
        If every log-weight is -inf (or NaN).
    """
    log_weights = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(log_weights)
    if not finite.any():
        raise DegenerateCloud("all particle log-weights are -inf")
    top = np.max(log_weights[finite])
    shifted = np.exp(np.where(finite, log_weights - top, -np.inf))
    total = shifted.sum()
    return shifted / total, top + np.log(total) - np.log(log_weights.size)


def effective_sample_size(weights) -> float:
    """1 / Σ w̃² for normalized weights; lies in [1, N]."""
    weights = np.asarray(weights, dtype=float)
    return 1.0 / float(weights @ weights)


def systematic_resample_indices(weights, n_out: int, u: float) -> np.ndarray:
    """Parent index for each of n_out children on the systematic grid.

    Positions (u + j)/n_out against the cumulative weights guarantee each
    parent p is copied between floor(n_out·w̃_p) and ceil(n_out·w̃_p) times.
    """
    weights = np.asarray(weights, dtype=float)
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard rounding so the last position always lands
    positions = (u + np.arange(n_out)) / n_out
    return np.searchsorted(cum, positions, side="right").astype(np.intp)


@dataclass
class ParticleCloud:
    """Particles with log-weights and their per-particle θ-derivatives.

    ``state`` is the model-owned tuple of jets; ``dlogw``/``d2logw`` are the
    accumulated derivatives of each particle's log-weight since the last
    resample (None below the requested derivative order).
    """

    state: tuple
    log_weights: np.ndarray
    dlogw: np.ndarray | None = None
    d2logw: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.log_weights.size

    def normalized(self):
        return normalize_log_weights(self.log_weights)

    def ess(self) -> float:
        weights, _ = self.normalized()
        return effective_sample_size(weights)

    def resample(self, u: float) -> "ParticleCloud":
        """Systematic resampling: children inherit the parent state (with its
        derivatives); log-weights and their derivatives reset."""
        weights, _ = self.normalized()
        idx = systematic_resample_indices(weights, self.n_particles, u)
        return ParticleCloud(
            state=select_state(self.state, idx),
            log_weights=np.zeros(self.n_particles),
            dlogw=None if self.dlogw is None else np.zeros_like(self.dlogw),
            d2logw=None if self.d2logw is None else np.zeros_like(self.d2logw),
        )


def _fold_block(weights, dlogw, d2logw, grad_total, hess_total):
    """Add one normalization block's gradient/Hessian contribution."""
    if dlogw is None:
        return
    mean = weights @ dlogw
    grad_total += mean
    if d2logw is None:
        return
    centered = dlogw - mean
    hess_total += np.tensordot(weights, d2logw, axes=1)
    hess_total += (weights[:, None] * centered).T @ centered


def run_pf(model, theta, observations, streams, sample_id: int, n_x: int,
           order: int = 0) -> LogLikEstimate:
    """Filter the observation sequence at θ and estimate log p(y|θ).

    Parameters
    ----------
    model : StateSpaceModel
    theta : parameter vector inside the prior support
    observations : array of length T
    streams : CrnStreams
        Noise and resampling draws are keyed by ``sample_id`` only, so a
        sampler slot re-evaluates the same fixed function of θ every call.
    order : {0, 1, 2}
        0 value only, 1 adds the gradient, 2 adds the negative Hessian.

    A fully degenerate step returns loglik = -inf (grad/Hessian None) rather
    than raising; the sampler zero-weights such evaluations.
    """
    theta = np.asarray(theta, dtype=float)
    if n_x < 2:
        raise ValueError("n_x must be >= 2")
    t_steps = len(observations)
    d = model.dim

    ctx = model.prepare(theta, order)
    state = model.init_state(n_x, order)
    noise = streams.pf_propagation(sample_id, t_steps, n_x, model.noise_dim)
    resample_u = streams.pf_resample_u(sample_id, t_steps)

    log_w = np.zeros(n_x)
    dlogw = np.zeros((n_x, d)) if order >= 1 else None
    d2logw = np.zeros((n_x, d, d)) if order >= 2 else None

    loglik = 0.0
    grad_total = np.zeros(d) if order >= 1 else None
    hess_total = np.zeros((d, d)) if order >= 2 else None
    log_norm_prev = np.log(n_x)  # logsumexp of the freshly reset weights

    for t in range(t_steps):
        state, incr = model.pf_step(ctx, state, observations[t], noise[t])
        step_lw = incr.v
        bad = ~np.isfinite(step_lw)
        if bad.any():
            step_lw = np.where(bad, -np.inf, step_lw)
        log_w = log_w + step_lw
        if order >= 1:
            dlogw = dlogw + incr.g
            if bad.any():
                dlogw[bad] = 0.0
            if order >= 2:
                d2logw = d2logw + incr.h
                if bad.any():
                    d2logw[bad] = 0.0

        top = np.max(log_w)
        if not np.isfinite(top):
            return LogLikEstimate(-np.inf)
        shifted = np.exp(log_w - top)
        total = shifted.sum()
        log_norm = top + np.log(total)
        loglik += log_norm - log_norm_prev
        weights = shifted / total

        ess = 1.0 / float(weights @ weights)
        if ess < n_x / 2.0 and t < t_steps - 1:
            _fold_block(weights, dlogw, d2logw, grad_total, hess_total)
            idx = systematic_resample_indices(weights, n_x, resample_u[t])
            state = select_state(state, idx)
            log_w = np.zeros(n_x)
            if order >= 1:
                dlogw = np.zeros((n_x, d))
            if order >= 2:
                d2logw = np.zeros((n_x, d, d))
            log_norm_prev = np.log(n_x)
        else:
            log_norm_prev = log_norm

    _fold_block(weights, dlogw, d2logw, grad_total, hess_total)
    neg_hess = None if hess_total is None else symmetrize(-hess_total)
    return LogLikEstimate(float(loglik), grad_total, neg_hess)
